#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace matchlab {

using AgentId = std::int64_t;

enum class Gender : std::uint8_t { CisFemale, CisMale, TransFemale, TransMale, NonBinary, Other };
inline constexpr std::size_t kGenderCount = 6;
inline constexpr std::array<Gender, kGenderCount> kAllGenders{
    Gender::CisFemale, Gender::CisMale,   Gender::TransFemale,
    Gender::TransMale, Gender::NonBinary, Gender::Other};

/// Gender minority: anyone who is neither cisgender female nor cisgender male.
constexpr bool is_minority(Gender g) noexcept {
    return g != Gender::CisFemale && g != Gender::CisMale;
}

std::string_view to_string(Gender g);
Gender gender_from_string(std::string_view name);

enum class Role : std::uint8_t { Seeker, Counselor };
std::string_view to_string(Role r);

enum class AgentState : std::uint8_t { Waiting, Chatting, Departed };
std::string_view to_string(AgentState s);

/// Born after this year counts as a teenager.
inline constexpr int kTeenBirthYearAfter = 2002;

struct Agent {
    AgentId id = 0;
    Role role = Role::Seeker;
    Gender gender = Gender::CisFemale;
    int birth_year = 1990;
    int signup_day = 0;
    int experience_level = 0;          // tier in [0, 4]
    std::optional<int> patience_min;   // seekers only
    int arrival_minute = 0;
    AgentState state = AgentState::Waiting;

    bool is_teen() const noexcept { return birth_year > kTeenBirthYearAfter; }
    bool is_minority() const noexcept { return matchlab::is_minority(gender); }
};

/// Waiting->Chatting, Waiting->Departed and Chatting->Departed only.
constexpr bool is_valid_transition(AgentState from, AgentState to) noexcept {
    return (from == AgentState::Waiting && to == AgentState::Chatting) ||
           (from == AgentState::Waiting && to == AgentState::Departed) ||
           (from == AgentState::Chatting && to == AgentState::Departed);
}

/// Moves `agent` to `to`; throws std::logic_error on an illegal transition.
void transition(Agent& agent, AgentState to);

/// Throws std::invalid_argument when field constraints are violated
/// (patience present iff seeker, patience >= 1, experience tier range).
void validate_agent(const Agent& agent);

enum class Policy : std::uint8_t {
    Replication,
    Fcfs,
    Similarity,
    Rating,
    Blocking,
    RatingBlocking,
    Filter,
};
inline constexpr std::array<Policy, 7> kAllPolicies{
    Policy::Replication, Policy::Fcfs,           Policy::Similarity, Policy::Rating,
    Policy::Blocking,    Policy::RatingBlocking, Policy::Filter};

std::string_view to_string(Policy p);
Policy policy_from_string(std::string_view name);
/// Human-readable row label used in comparison tables.
std::string_view display_name(Policy p);
/// True for policies that build preference lists and run deferred acceptance.
constexpr bool uses_deferred_acceptance(Policy p) noexcept {
    return p != Policy::Replication && p != Policy::Filter;
}

/// Predicted outcomes for one (seeker, counselor) pair.
struct PairScore {
    AgentId seeker_id = 0;
    AgentId counselor_id = 0;
    int rating_pred = 1;     // [1, 5]
    int block_pred = 0;      // {0, 1}
    double combined = 1.0;   // -1 when blocked, otherwise rating_pred
    double similarity = 0.0; // [-1, 1]
};

/// -1 when the pair is predicted to block, otherwise the predicted rating.
double combined_score(int rating_pred, int block_pred);

PairScore make_pair_score(AgentId seeker, AgentId counselor, int rating_pred, int block_pred,
                          double similarity);

} // namespace matchlab
