#include "matchlab/matching.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>

namespace matchlab {

AgentLookup lookup_in(const std::vector<Agent>& agents) {
    bool dense = true;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].id != static_cast<AgentId>(i)) {
            dense = false;
            break;
        }
    }
    if (dense) {
        return [&agents](AgentId id) -> const Agent& {
            if (id < 0 || static_cast<std::size_t>(id) >= agents.size()) {
                throw std::out_of_range("unknown agent id " + std::to_string(id));
            }
            return agents[static_cast<std::size_t>(id)];
        };
    }
    auto index = std::make_shared<std::unordered_map<AgentId, std::size_t>>();
    for (std::size_t i = 0; i < agents.size(); ++i) (*index)[agents[i].id] = i;
    return [&agents, index](AgentId id) -> const Agent& {
        auto it = index->find(id);
        if (it == index->end()) throw std::out_of_range("unknown agent id " + std::to_string(id));
        return agents[it->second];
    };
}

// ---------------------------------------------------------------- scores

std::size_t ScoreTable::KeyHash::operator()(const std::pair<AgentId, AgentId>& k) const noexcept {
    return static_cast<std::size_t>(
        splitmix64(static_cast<std::uint64_t>(k.first) * 0x9e3779b97f4a7c15ULL ^
                   static_cast<std::uint64_t>(k.second)));
}

const PairScore& ScoreTable::get(const Agent& seeker, const Agent& counselor) {
    const auto key = std::make_pair(seeker.id, counselor.id);
    auto it = scores_.find(key);
    if (it != scores_.end()) return it->second;
    if (!scorer_) {
        throw std::out_of_range("no score for pair (" + std::to_string(seeker.id) + ", " +
                                std::to_string(counselor.id) + ")");
    }
    return scores_.emplace(key, scorer_(seeker, counselor)).first->second;
}

void ScoreTable::insert(const PairScore& score) {
    scores_[{score.seeker_id, score.counselor_id}] = score;
}

bool ScoreTable::contains(AgentId seeker, AgentId counselor) const {
    return scores_.count({seeker, counselor}) > 0;
}

// ---------------------------------------------------------------- preferences

double policy_key(Policy policy, const PairScore& score) {
    switch (policy) {
        case Policy::Fcfs:
            return 0.0;  // order comes entirely from the wait tie-break
        case Policy::Similarity:
            return score.similarity;
        case Policy::Rating:
            return score.rating_pred;
        case Policy::Blocking:
            return -score.block_pred;
        case Policy::RatingBlocking:
            return score.combined;
        case Policy::Replication:
        case Policy::Filter:
            break;
    }
    throw std::invalid_argument("policy '" + std::string(to_string(policy)) +
                                "' does not build preference lists");
}

namespace {

struct Candidate {
    double key;
    int arrival;
    AgentId id;
};

// Higher key first, then earlier arrival (longer wait), then lower id.
bool ranks_before(const Candidate& a, const Candidate& b) {
    if (a.key != b.key) return a.key > b.key;
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.id < b.id;
}

std::vector<AgentId> ordered(std::vector<Candidate>& cands, std::size_t limit) {
    const std::size_t keep = std::min(limit, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      ranks_before);
    std::vector<AgentId> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(cands[i].id);
    return out;
}

} // namespace

PreferenceProfile build_preferences(Policy policy, const RoundState& round,
                                    const AgentLookup& agents, ScoreTable& scores,
                                    std::size_t list_limit) {
    if (!uses_deferred_acceptance(policy)) {
        throw std::invalid_argument("policy '" + std::string(to_string(policy)) +
                                    "' does not build preference lists");
    }
    if (list_limit == 0) throw std::invalid_argument("list limit must be positive");

    const std::size_t ns = round.seekers.size();
    const std::size_t nc = round.counselors.size();
    std::vector<const Agent*> seekers(ns);
    std::vector<const Agent*> counselors(nc);
    for (std::size_t i = 0; i < ns; ++i) seekers[i] = &agents(round.seekers[i]);
    for (std::size_t j = 0; j < nc; ++j) counselors[j] = &agents(round.counselors[j]);

    // keys[i * nc + j] is the key of (seeker i, counselor j).
    std::vector<double> keys(ns * nc);
    for (std::size_t i = 0; i < ns; ++i) {
        for (std::size_t j = 0; j < nc; ++j) {
            keys[i * nc + j] = policy_key(policy, scores.get(*seekers[i], *counselors[j]));
        }
    }

    PreferenceProfile prefs;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < ns; ++i) {
        cands.clear();
        for (std::size_t j = 0; j < nc; ++j) {
            cands.push_back({keys[i * nc + j], counselors[j]->arrival_minute, counselors[j]->id});
        }
        prefs.seeker_prefs[seekers[i]->id] = ordered(cands, list_limit);
    }
    for (std::size_t j = 0; j < nc; ++j) {
        cands.clear();
        for (std::size_t i = 0; i < ns; ++i) {
            cands.push_back({keys[i * nc + j], seekers[i]->arrival_minute, seekers[i]->id});
        }
        prefs.counselor_prefs[counselors[j]->id] = ordered(cands, list_limit);
    }
    return prefs;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("vectors differ in length");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const Agent& a, const Agent& b, const FeatureScaling& scaling) {
    const auto x = encode_agent(a, scaling);
    const auto y = encode_agent(b, scaling);
    return cosine_similarity(x, y);
}

PreferenceProfile apply_recommendation_noise(PreferenceProfile prefs, double p_accept, Rng& rng) {
    if (!(p_accept >= 0.0 && p_accept <= 1.0)) {
        throw std::invalid_argument("recommendation_accept_prob must be in [0, 1]");
    }
    for (auto& [counselor, list] : prefs.counselor_prefs) {
        const bool take = rng.bernoulli(p_accept);
        if (take || list.size() < 2) continue;
        const std::size_t other = 1 + static_cast<std::size_t>(rng.below(list.size() - 1));
        std::swap(list[0], list[other]);
    }
    return prefs;
}

// ---------------------------------------------------------------- deferred acceptance

void validate_profile(const PreferenceProfile& prefs) {
    auto check = [](const std::map<AgentId, std::vector<AgentId>>& lists,
                    const std::map<AgentId, std::vector<AgentId>>& other, const char* side) {
        for (const auto& [owner, list] : lists) {
            std::set<AgentId> seen;
            for (AgentId id : list) {
                if (!other.count(id)) {
                    throw std::invalid_argument(std::string(side) + " " + std::to_string(owner) +
                                                " lists unknown agent " + std::to_string(id));
                }
                if (!seen.insert(id).second) {
                    throw std::invalid_argument(std::string(side) + " " + std::to_string(owner) +
                                                " lists agent " + std::to_string(id) + " twice");
                }
            }
        }
    };
    for (const auto& [s, _] : prefs.seeker_prefs) {
        if (prefs.counselor_prefs.count(s)) {
            throw std::invalid_argument("agent " + std::to_string(s) + " appears on both sides");
        }
    }
    check(prefs.seeker_prefs, prefs.counselor_prefs, "seeker");
    check(prefs.counselor_prefs, prefs.seeker_prefs, "counselor");
}

Matching deferred_acceptance(const PreferenceProfile& prefs) {
    validate_profile(prefs);

    std::vector<AgentId> seeker_ids;
    std::vector<AgentId> counselor_ids;
    std::unordered_map<AgentId, std::size_t> seeker_index;
    std::unordered_map<AgentId, std::size_t> counselor_index;
    for (const auto& [s, _] : prefs.seeker_prefs) {
        seeker_index[s] = seeker_ids.size();
        seeker_ids.push_back(s);
    }
    for (const auto& [c, _] : prefs.counselor_prefs) {
        counselor_index[c] = counselor_ids.size();
        counselor_ids.push_back(c);
    }
    const std::size_t ns = seeker_ids.size();
    const std::size_t nc = counselor_ids.size();

    // rank[c * ns + s]: position of seeker s in counselor c's list, -1 if absent.
    std::vector<int> rank(nc * ns, -1);
    for (const auto& [c, list] : prefs.counselor_prefs) {
        const std::size_t ci = counselor_index[c];
        for (std::size_t r = 0; r < list.size(); ++r) {
            rank[ci * ns + seeker_index[list[r]]] = static_cast<int>(r);
        }
    }
    std::vector<std::vector<std::size_t>> proposals(ns);
    for (const auto& [s, list] : prefs.seeker_prefs) {
        auto& p = proposals[seeker_index[s]];
        for (AgentId c : list) p.push_back(counselor_index[c]);
    }

    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> next(ns, 0);
    std::vector<std::size_t> held(nc, kNone);
    std::vector<std::size_t> free;
    for (std::size_t s = ns; s-- > 0;) free.push_back(s);

    while (!free.empty()) {
        const std::size_t s = free.back();
        free.pop_back();
        if (next[s] >= proposals[s].size()) continue;  // list exhausted, stays unmatched
        const std::size_t c = proposals[s][next[s]++];
        const int r = rank[c * ns + s];
        if (r < 0) {
            free.push_back(s);
        } else if (held[c] == kNone) {
            held[c] = s;
        } else if (r < rank[c * ns + held[c]]) {
            free.push_back(held[c]);
            held[c] = s;
        } else {
            free.push_back(s);
        }
    }

    Matching m;
    std::vector<bool> seeker_matched(ns, false);
    for (std::size_t c = 0; c < nc; ++c) {
        if (held[c] == kNone) {
            m.unmatched_counselors.push_back(counselor_ids[c]);
        } else {
            seeker_matched[held[c]] = true;
            m.pairs.emplace_back(seeker_ids[held[c]], counselor_ids[c]);
        }
    }
    for (std::size_t s = 0; s < ns; ++s) {
        if (!seeker_matched[s]) m.unmatched_seekers.push_back(seeker_ids[s]);
    }
    std::sort(m.pairs.begin(), m.pairs.end());
    return m;
}

bool is_stable(const PreferenceProfile& prefs, const Matching& matching) {
    std::map<AgentId, AgentId> partner_of_seeker;
    std::map<AgentId, AgentId> partner_of_counselor;
    for (const auto& [s, c] : matching.pairs) {
        partner_of_seeker[s] = c;
        partner_of_counselor[c] = s;
    }
    auto position = [](const std::vector<AgentId>& list, AgentId id) -> std::ptrdiff_t {
        auto it = std::find(list.begin(), list.end(), id);
        return it == list.end() ? -1 : it - list.begin();
    };
    for (const auto& [s, slist] : prefs.seeker_prefs) {
        const auto sp = partner_of_seeker.find(s);
        const std::ptrdiff_t s_current =
            sp == partner_of_seeker.end() ? static_cast<std::ptrdiff_t>(slist.size())
                                          : position(slist, sp->second);
        for (std::ptrdiff_t i = 0; i < s_current; ++i) {
            const AgentId c = slist[static_cast<std::size_t>(i)];
            const auto& clist = prefs.counselor_prefs.at(c);
            const std::ptrdiff_t rank_s = position(clist, s);
            if (rank_s < 0) continue;
            const auto cp = partner_of_counselor.find(c);
            if (cp == partner_of_counselor.end()) return false;
            const std::ptrdiff_t rank_current = position(clist, cp->second);
            if (rank_current < 0 || rank_s < rank_current) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- baselines

DecisionClock::DecisionClock(double rate_per_min) : rate_(rate_per_min) {
    if (!(rate_per_min > 0.0)) throw std::invalid_argument("decision rate must be positive");
}

bool DecisionClock::tick(AgentId counselor, Rng& rng) {
    auto it = residual_.find(counselor);
    if (it == residual_.end()) {
        it = residual_.emplace(counselor, rng.exponential(rate_)).first;
    }
    it->second -= 1.0;
    return it->second <= 0.0;
}

Pool pool_of(const Agent& agent) {
    if (agent.is_teen()) return Pool::Teen;
    if (agent.is_minority()) return Pool::Minority;
    return Pool::General;
}

namespace {

std::vector<AgentId> sorted_copy(const std::vector<AgentId>& ids) {
    std::vector<AgentId> out = ids;
    std::sort(out.begin(), out.end());
    return out;
}

template <class PoolOf>
Matching random_pick(const RoundState& round, DecisionClock& clock, Rng& rng, PoolOf pool_for) {
    std::map<int, std::vector<AgentId>> waiting;
    for (AgentId s : sorted_copy(round.seekers)) waiting[pool_for(s)].push_back(s);

    Matching m;
    for (AgentId c : sorted_copy(round.counselors)) {
        const bool ready = clock.tick(c, rng);
        auto it = waiting.find(pool_for(c));
        if (!ready || it == waiting.end() || it->second.empty()) {
            m.unmatched_counselors.push_back(c);
            continue;
        }
        auto& queue = it->second;
        const std::size_t pick = static_cast<std::size_t>(rng.below(queue.size()));
        m.pairs.emplace_back(queue[pick], c);
        queue.erase(queue.begin() + static_cast<std::ptrdiff_t>(pick));
        clock.forget(c);
    }
    for (const auto& [_, queue] : waiting) {
        m.unmatched_seekers.insert(m.unmatched_seekers.end(), queue.begin(), queue.end());
    }
    std::sort(m.pairs.begin(), m.pairs.end());
    std::sort(m.unmatched_seekers.begin(), m.unmatched_seekers.end());
    return m;
}

} // namespace

Matching replication_match(const RoundState& round, DecisionClock& clock, Rng& rng) {
    return random_pick(round, clock, rng, [](AgentId) { return 0; });
}

Matching filter_pool_match(const RoundState& round, const AgentLookup& agents,
                           DecisionClock& clock, Rng& rng) {
    return random_pick(round, clock, rng,
                       [&](AgentId id) { return static_cast<int>(pool_of(agents(id))); });
}

} // namespace matchlab
