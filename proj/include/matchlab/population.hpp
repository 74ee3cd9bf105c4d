#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "matchlab/core.hpp"
#include "matchlab/rng.hpp"

namespace matchlab {

/// Distribution parameters for the synthetic population. The online-count,
/// patience, chat-length and decision-time values are measured platform
/// statistics; gender, teen and experience weights are calibration inputs.
struct PopulationParams {
    double seeker_online_mean = 113.26;
    double seeker_online_sd = 22.56;
    double counselor_online_mean = 102.49;
    double counselor_online_sd = 25.07;
    double patience_mean_min = 4.15;
    double patience_sd_min = 3.26;
    double chat_len_mean_min = 17.67;
    double chat_len_sd_min = 15.44;
    double decision_rate_per_min = 1.25;

    // Order follows kAllGenders: CisFemale, CisMale, TransFemale, TransMale, NonBinary, Other.
    std::array<double, kGenderCount> seeker_gender_weights{0.52, 0.30, 0.04, 0.04, 0.08, 0.02};
    std::array<double, kGenderCount> counselor_gender_weights{0.58, 0.30, 0.03, 0.02, 0.05, 0.02};

    int birth_year_min = 1950;
    int birth_year_max = 2008;
    double seeker_teen_fraction = 0.20;
    double counselor_teen_fraction = 0.15;

    // Days since 1970-01-01: 2014-01-01 .. 2020-08-31.
    int signup_day_min = 16071;
    int signup_day_max = 18505;

    std::array<double, 5> experience_weights{0.30, 0.25, 0.20, 0.15, 0.10};

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;

    double online_mean(Role r) const {
        return r == Role::Seeker ? seeker_online_mean : counselor_online_mean;
    }
    double online_sd(Role r) const {
        return r == Role::Seeker ? seeker_online_sd : counselor_online_sd;
    }

    bool operator==(const PopulationParams&) const = default;
};

/// Target online count for `role` this minute: a normal draw truncated below
/// at 0.5, rounded, so at least 1.
int sample_online_target(const PopulationParams& params, Role role, int minute, Rng& rng);

/// Integer-valued distribution obtained by rounding a continuous law and
/// clamping at 1, with the continuous parameters fitted so the *integer*
/// values hit the requested mean and standard deviation.
class DiscretizedDistribution {
public:
    enum class Family { Gamma, LogNormal };

    DiscretizedDistribution(Family family, double mean, double sd);

    int sample(Rng& rng) const;

    /// Exact moments of the integer law under the fitted parameters.
    double fitted_mean() const { return fitted_mean_; }
    double fitted_sd() const { return fitted_sd_; }
    /// Continuous parameters: (shape, scale) for gamma, (mu, sigma) for lognormal.
    double param_a() const { return a_; }
    double param_b() const { return b_; }

private:
    void set_from_moments(double mean, double sd);
    double cdf(double x) const;
    void integer_moments(double& mean, double& sd) const;

    Family family_;
    bool degenerate_ = false;
    int degenerate_value_ = 1;
    double a_ = 1.0;
    double b_ = 1.0;
    double fitted_mean_ = 0.0;
    double fitted_sd_ = 0.0;
};

/// Patience in whole minutes (>= 1): discretized gamma matched to the
/// configured mean and sd.
DiscretizedDistribution patience_distribution(const PopulationParams& params);
int sample_patience(const PopulationParams& params, Rng& rng);

/// Chat length in whole minutes (>= 1): discretized lognormal.
DiscretizedDistribution chat_length_distribution(const PopulationParams& params);
int sample_chat_length(const PopulationParams& params, Rng& rng);

/// Counselor decision time in minutes, Exp(decision_rate_per_min).
double sample_decision_time(const PopulationParams& params, Rng& rng);

/// Hands out run-unique agent ids.
class IdSource {
public:
    explicit IdSource(AgentId first = 0) : next_(first) {}
    AgentId next() { return next_++; }
    AgentId peek() const { return next_; }

private:
    AgentId next_;
};

/// Builds agents with attributes drawn from PopulationParams. Caches the fitted
/// patience law so per-agent generation stays cheap.
class AgentFactory {
public:
    explicit AgentFactory(PopulationParams params);

    const PopulationParams& params() const { return params_; }

    /// One agent; patience is drawn from `patience_rng` for seekers only.
    Agent make_agent(AgentId id, Role role, int arrival_minute, Rng& attribute_rng,
                     Rng& patience_rng) const;

    int draw_patience(Rng& rng) const { return patience_.sample(rng); }

private:
    PopulationParams params_;
    DiscretizedDistribution patience_;
};

/// max(0, target - current_online) fresh agents arriving at `minute`, all Waiting.
std::vector<Agent> generate_arrivals(const AgentFactory& factory, IdSource& ids, int target,
                                     int current_online, Role role, int minute,
                                     Rng& attribute_rng, Rng& patience_rng);

} // namespace matchlab
