#include "matchlab/encoding.hpp"

namespace matchlab {

FeatureScaling FeatureScaling::from_population(const PopulationParams& params) {
    FeatureScaling s;
    s.min = {static_cast<double>(params.birth_year_min), static_cast<double>(params.signup_day_min),
             0.0};
    s.max = {static_cast<double>(params.birth_year_max), static_cast<double>(params.signup_day_max),
             4.0};
    return s;
}

void encode_agent(const Agent& agent, const FeatureScaling& scaling,
                  std::span<double, kAgentEncodingDim> out) {
    for (std::size_t g = 0; g < kGenderCount; ++g) {
        out[g] = 0.0;
    }
    out[static_cast<std::size_t>(agent.gender)] = 1.0;
    out[kGenderCount + 0] = scaling.scale(0, agent.birth_year);
    out[kGenderCount + 1] = scaling.scale(1, agent.signup_day);
    out[kGenderCount + 2] = scaling.scale(2, agent.experience_level);
}

std::array<double, kAgentEncodingDim> encode_agent(const Agent& agent,
                                                   const FeatureScaling& scaling) {
    std::array<double, kAgentEncodingDim> out{};
    encode_agent(agent, scaling, std::span<double, kAgentEncodingDim>(out));
    return out;
}

std::array<double, kPairEncodingDim> encode_pair(const Agent& seeker, const Agent& counselor,
                                                 const FeatureScaling& scaling) {
    std::array<double, kPairEncodingDim> out{};
    encode_agent(seeker, scaling, std::span<double, kAgentEncodingDim>(out.data(), kAgentEncodingDim));
    encode_agent(counselor, scaling,
                 std::span<double, kAgentEncodingDim>(out.data() + kAgentEncodingDim,
                                                      kAgentEncodingDim));
    out[2 * kAgentEncodingDim] = seeker.is_minority() ? 1.0 : 0.0;
    out[2 * kAgentEncodingDim + 1] = counselor.is_minority() ? 1.0 : 0.0;
    return out;
}

void to_json(nlohmann::json& j, const FeatureScaling& s) {
    j = nlohmann::json{{"attributes", {"birth_year", "signup_day", "experience_level"}},
                       {"min", s.min},
                       {"max", s.max}};
}

void from_json(const nlohmann::json& j, FeatureScaling& s) {
    s.min = j.at("min").get<std::array<double, 3>>();
    s.max = j.at("max").get<std::array<double, 3>>();
}

} // namespace matchlab
