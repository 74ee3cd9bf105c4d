#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "matchlab/core.hpp"
#include "matchlab/encoding.hpp"
#include "matchlab/rng.hpp"

namespace matchlab {

/// Agents available for matching in one minute. Both lists hold Waiting agents.
struct RoundState {
    std::vector<AgentId> seekers;
    std::vector<AgentId> counselors;
    int minute = 0;
};

/// Ordered candidate lists for both sides of one round.
struct PreferenceProfile {
    std::map<AgentId, std::vector<AgentId>> seeker_prefs;
    std::map<AgentId, std::vector<AgentId>> counselor_prefs;

    bool operator==(const PreferenceProfile&) const = default;
};

struct Matching {
    std::vector<std::pair<AgentId, AgentId>> pairs;  // (seeker, counselor), sorted by seeker id
    std::vector<AgentId> unmatched_seekers;
    std::vector<AgentId> unmatched_counselors;

    bool operator==(const Matching&) const = default;
};

using AgentLookup = std::function<const Agent&(AgentId)>;

/// Lookup over a vector of agents. Uses direct indexing when agents[i].id == i.
AgentLookup lookup_in(const std::vector<Agent>& agents);

/// Memoised PairScores. Missing entries are computed by the scorer, or
/// std::out_of_range is thrown when there is none.
class ScoreTable {
public:
    using Scorer = std::function<PairScore(const Agent& seeker, const Agent& counselor)>;

    ScoreTable() = default;
    explicit ScoreTable(Scorer scorer) : scorer_(std::move(scorer)) {}

    const PairScore& get(const Agent& seeker, const Agent& counselor);
    void insert(const PairScore& score);
    bool contains(AgentId seeker, AgentId counselor) const;
    std::size_t size() const { return scores_.size(); }
    void clear() { scores_.clear(); }

private:
    struct KeyHash {
        std::size_t operator()(const std::pair<AgentId, AgentId>& k) const noexcept;
    };
    Scorer scorer_;
    std::unordered_map<std::pair<AgentId, AgentId>, PairScore, KeyHash> scores_;
};

inline constexpr std::size_t kDefaultListLimit = 50;

/// Sort key for a pair under a list-based policy; both sides rank by it,
/// higher first.
double policy_key(Policy policy, const PairScore& score);

/// Per-policy preference lists, descending by policy_key, ties broken by the
/// candidate's longer wait and then lower id, truncated to `list_limit`.
/// Throws std::invalid_argument for policies that do not rank candidates.
PreferenceProfile build_preferences(Policy policy, const RoundState& round,
                                    const AgentLookup& agents, ScoreTable& scores,
                                    std::size_t list_limit = kDefaultListLimit);

/// Cosine of two feature vectors; 0 when either has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Agent& a, const Agent& b, const FeatureScaling& scaling);

/// With probability 1 - p_accept per counselor, swaps the head of its list
/// with a uniformly chosen other entry. Seeker lists are untouched.
PreferenceProfile apply_recommendation_noise(PreferenceProfile prefs, double p_accept, Rng& rng);

/// Throws std::invalid_argument on duplicate or unknown ids.
void validate_profile(const PreferenceProfile& prefs);

/// Seeker-proposing deferred acceptance with single-seat counselors. A pair can
/// only form when each side lists the other.
Matching deferred_acceptance(const PreferenceProfile& prefs);

/// True when no listed pair would both rather be together than with their
/// current partners.
bool is_stable(const PreferenceProfile& prefs, const Matching& matching);

/// Exponential think time of each available counselor. A counselor becomes
/// ready once its accumulated time runs out and stays ready until it picks.
class DecisionClock {
public:
    explicit DecisionClock(double rate_per_min = 1.25);

    /// Advances `counselor` by one minute; true if it may pick this minute.
    bool tick(AgentId counselor, Rng& rng);
    void forget(AgentId counselor) { residual_.erase(counselor); }
    std::size_t tracked() const { return residual_.size(); }
    double rate() const { return rate_; }

private:
    double rate_;
    std::map<AgentId, double> residual_;
};

enum class Pool { Teen, Minority, General };
/// Teen takes precedence over gender minority.
Pool pool_of(const Agent& agent);

/// Counselors in increasing id order whose clock fires pick a uniformly random
/// still-unmatched seeker.
Matching replication_match(const RoundState& round, DecisionClock& clock, Rng& rng);

/// Replication restricted to pools: a counselor only picks seekers from its own pool.
Matching filter_pool_match(const RoundState& round, const AgentLookup& agents,
                           DecisionClock& clock, Rng& rng);

} // namespace matchlab
