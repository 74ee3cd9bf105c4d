#pragma once

#include <array>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/core.hpp"
#include "matchlab/population.hpp"

namespace matchlab {

/// Min-max ranges for the ordinal agent attributes.
struct FeatureScaling {
    // birth_year, signup_day, experience_level
    std::array<double, 3> min{1950.0, 16071.0, 0.0};
    std::array<double, 3> max{2008.0, 18505.0, 4.0};

    static FeatureScaling from_population(const PopulationParams& params);

    double scale(std::size_t attribute, double value) const {
        const double range = max[attribute] - min[attribute];
        return range > 0.0 ? (value - min[attribute]) / range : 0.0;
    }

    bool operator==(const FeatureScaling&) const = default;
};

/// One-hot gender followed by scaled birth year, signup day and experience.
inline constexpr std::size_t kAgentEncodingDim = kGenderCount + 3;
/// Seeker encoding, counselor encoding, then each side's minority flag.
inline constexpr std::size_t kPairEncodingDim = 2 * kAgentEncodingDim + 2;

void encode_agent(const Agent& agent, const FeatureScaling& scaling,
                  std::span<double, kAgentEncodingDim> out);
std::array<double, kAgentEncodingDim> encode_agent(const Agent& agent,
                                                   const FeatureScaling& scaling);
std::array<double, kPairEncodingDim> encode_pair(const Agent& seeker, const Agent& counselor,
                                                 const FeatureScaling& scaling);

void to_json(nlohmann::json& j, const FeatureScaling& s);
void from_json(const nlohmann::json& j, FeatureScaling& s);

} // namespace matchlab
