#pragma once

#include <nlohmann/json.hpp>

#include "matchlab/core.hpp"

namespace matchlab {

/// A running chat. Both participants are Chatting for [start_minute, end_minute()).
struct ChatSession {
    AgentId seeker_id = 0;
    AgentId counselor_id = 0;
    int start_minute = 0;
    int length_min = 1;

    int end_minute() const { return start_minute + length_min; }
};

struct MatchRecord {
    AgentId seeker_id = 0;
    AgentId counselor_id = 0;
    int match_minute = 0;
    int wait_min = 0;
    int chat_len_min = 1;
    int rating_pred = 5;
    int block_pred = 0;
    int oracle_rating = 5;
    int oracle_block = 0;
    bool teen = false;      // seeker flags
    bool minority = false;

    bool operator==(const MatchRecord&) const = default;
};

struct AbandonRecord {
    AgentId seeker_id = 0;
    int abandon_minute = 0;
    int wait_min = 0;       // the seeker's patience
    bool teen = false;
    bool minority = false;

    bool operator==(const AbandonRecord&) const = default;
};

void to_json(nlohmann::json& j, const MatchRecord& r);
void from_json(const nlohmann::json& j, MatchRecord& r);
void to_json(nlohmann::json& j, const AbandonRecord& r);
void from_json(const nlohmann::json& j, AbandonRecord& r);

} // namespace matchlab
