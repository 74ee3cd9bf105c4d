#include "matchlab/core.hpp"

#include <stdexcept>
#include <string>

namespace matchlab {

namespace {

constexpr std::array<std::string_view, kGenderCount> kGenderNames{
    "cis_female", "cis_male", "trans_female", "trans_male", "nonbinary", "other"};

constexpr std::array<std::string_view, 7> kPolicyNames{
    "replication", "fcfs", "similarity", "rating", "blocking", "rating_blocking", "filter"};

constexpr std::array<std::string_view, 7> kPolicyDisplay{
    "Replication",          "First-Come-First-Serve", "Similarity-based", "Rating-based",
    "Blocking-based",       "Rating-blocking-combined", "Filter-based"};

} // namespace

std::string_view to_string(Gender g) {
    return kGenderNames.at(static_cast<std::size_t>(g));
}

Gender gender_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kGenderNames.size(); ++i) {
        if (kGenderNames[i] == name) {
            return static_cast<Gender>(i);
        }
    }
    throw std::invalid_argument("unknown gender '" + std::string(name) + "'");
}

std::string_view to_string(Role r) {
    return r == Role::Seeker ? "seeker" : "counselor";
}

std::string_view to_string(AgentState s) {
    switch (s) {
    case AgentState::Waiting: return "waiting";
    case AgentState::Chatting: return "chatting";
    case AgentState::Departed: return "departed";
    }
    return "?";
}

void transition(Agent& agent, AgentState to) {
    if (!is_valid_transition(agent.state, to)) {
        throw std::logic_error("agent " + std::to_string(agent.id) + ": illegal transition " +
                               std::string(to_string(agent.state)) + " -> " +
                               std::string(to_string(to)));
    }
    agent.state = to;
}

void validate_agent(const Agent& agent) {
    if (agent.role == Role::Seeker) {
        if (!agent.patience_min) {
            throw std::invalid_argument("seeker " + std::to_string(agent.id) + " has no patience");
        }
        if (*agent.patience_min < 1) {
            throw std::invalid_argument("seeker " + std::to_string(agent.id) +
                                        " has patience below 1 minute");
        }
    } else if (agent.patience_min) {
        throw std::invalid_argument("counselor " + std::to_string(agent.id) + " has a patience value");
    }
    if (agent.experience_level < 0 || agent.experience_level > 4) {
        throw std::invalid_argument("agent " + std::to_string(agent.id) +
                                    ": experience tier outside [0, 4]");
    }
}

std::string_view to_string(Policy p) {
    return kPolicyNames.at(static_cast<std::size_t>(p));
}

std::string_view display_name(Policy p) {
    return kPolicyDisplay.at(static_cast<std::size_t>(p));
}

Policy policy_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kPolicyNames.size(); ++i) {
        if (kPolicyNames[i] == name) {
            return static_cast<Policy>(i);
        }
    }
    throw std::invalid_argument("unknown policy '" + std::string(name) + "'");
}

double combined_score(int rating_pred, int block_pred) {
    if (rating_pred < 1 || rating_pred > 5) {
        throw std::invalid_argument("combined_score: rating_pred " + std::to_string(rating_pred) +
                                    " outside [1, 5]");
    }
    if (block_pred != 0 && block_pred != 1) {
        throw std::invalid_argument("combined_score: block_pred " + std::to_string(block_pred) +
                                    " not in {0, 1}");
    }
    return block_pred == 1 ? -1.0 : static_cast<double>(rating_pred);
}

PairScore make_pair_score(AgentId seeker, AgentId counselor, int rating_pred, int block_pred,
                          double similarity) {
    return PairScore{seeker, counselor, rating_pred, block_pred,
                     combined_score(rating_pred, block_pred), similarity};
}

} // namespace matchlab
