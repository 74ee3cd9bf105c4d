#include "matchlab/population.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace matchlab {

namespace {

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw std::invalid_argument(std::string("PopulationParams.") + field + ": " + what);
    }
}

template <std::size_t N>
void require_weights(const std::array<double, N>& w, const char* field) {
    for (double x : w) {
        require(x >= 0.0, field, "weights must be non-negative");
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    require(std::abs(total - 1.0) < 1e-6, field, "weights must sum to 1");
}

} // namespace

void PopulationParams::validate() const {
    require(seeker_online_mean > 0, "seeker_online_mean", "must be positive");
    require(counselor_online_mean > 0, "counselor_online_mean", "must be positive");
    require(seeker_online_sd >= 0, "seeker_online_sd", "must be non-negative");
    require(counselor_online_sd >= 0, "counselor_online_sd", "must be non-negative");
    require(patience_mean_min > 0, "patience_mean_min", "must be positive");
    require(patience_sd_min >= 0, "patience_sd_min", "must be non-negative");
    require(chat_len_mean_min > 0, "chat_len_mean_min", "must be positive");
    require(chat_len_sd_min >= 0, "chat_len_sd_min", "must be non-negative");
    require(decision_rate_per_min > 0, "decision_rate_per_min", "must be positive");
    require_weights(seeker_gender_weights, "seeker_gender_weights");
    require_weights(counselor_gender_weights, "counselor_gender_weights");
    require_weights(experience_weights, "experience_weights");
    require(birth_year_min <= kTeenBirthYearAfter && birth_year_max > kTeenBirthYearAfter,
            "birth_year_range", "must contain both adult and teen birth years");
    require(seeker_teen_fraction >= 0 && seeker_teen_fraction <= 1, "seeker_teen_fraction",
            "must be a probability");
    require(counselor_teen_fraction >= 0 && counselor_teen_fraction <= 1,
            "counselor_teen_fraction", "must be a probability");
    require(signup_day_min <= signup_day_max, "signup_day_range", "min exceeds max");
}

int sample_online_target(const PopulationParams& params, Role role, int minute, Rng& rng) {
    if (minute < 0) {
        throw std::invalid_argument("sample_online_target: negative minute");
    }
    const double mean = params.online_mean(role);
    const double sd = params.online_sd(role);
    if (sd <= 0.0) {
        return std::max(1, static_cast<int>(std::lround(mean)));
    }
    double x = rng.normal(mean, sd);
    while (x < 0.5) {
        x = rng.normal(mean, sd);
    }
    return std::max(1, static_cast<int>(std::lround(x)));
}

// --- DiscretizedDistribution ----------------------------------------------------

DiscretizedDistribution::DiscretizedDistribution(Family family, double mean, double sd)
    : family_(family) {
    if (!(mean > 0.0) || sd < 0.0) {
        throw std::invalid_argument("DiscretizedDistribution: mean must be positive, sd non-negative");
    }
    if (sd == 0.0) {
        degenerate_ = true;
        degenerate_value_ = std::max(1, static_cast<int>(std::lround(mean)));
        fitted_mean_ = degenerate_value_;
        fitted_sd_ = 0.0;
        return;
    }
    // Rounding and clamping shift the moments, so solve for the continuous
    // moments whose integer image has the requested ones.
    double cont_mean = mean;
    double cont_sd = sd;
    for (int iter = 0; iter < 200; ++iter) {
        set_from_moments(cont_mean, cont_sd);
        double m = 0.0;
        double s = 0.0;
        integer_moments(m, s);
        fitted_mean_ = m;
        fitted_sd_ = s;
        const double dm = mean - m;
        const double ds = sd - s;
        if (std::abs(dm) < 1e-10 && std::abs(ds) < 1e-10) {
            break;
        }
        cont_mean = std::max(1e-3, cont_mean + dm);
        cont_sd = std::max(1e-3, cont_sd + ds);
    }
}

void DiscretizedDistribution::set_from_moments(double mean, double sd) {
    if (family_ == Family::Gamma) {
        a_ = (mean * mean) / (sd * sd);
        b_ = (sd * sd) / mean;
    } else {
        const double sigma2 = std::log1p((sd * sd) / (mean * mean));
        a_ = std::log(mean) - 0.5 * sigma2;
        b_ = std::sqrt(sigma2);
    }
}

double DiscretizedDistribution::cdf(double x) const {
    if (x <= 0.0) {
        return 0.0;
    }
    if (family_ == Family::Gamma) {
        return boost::math::gamma_p(a_, x / b_);
    }
    return 0.5 * std::erfc(-(std::log(x) - a_) / (b_ * std::sqrt(2.0)));
}

void DiscretizedDistribution::integer_moments(double& mean, double& sd) const {
    double m1 = 0.0;
    double m2 = 0.0;
    double prev = cdf(1.5);
    m1 += prev;
    m2 += prev;
    for (int k = 2; k < 100000; ++k) {
        const double next = cdf(k + 0.5);
        const double p = next - prev;
        m1 += p * k;
        m2 += p * static_cast<double>(k) * k;
        prev = next;
        if (1.0 - next < 1e-15 && k > 10) {
            break;
        }
    }
    mean = m1;
    sd = std::sqrt(std::max(0.0, m2 - m1 * m1));
}

int DiscretizedDistribution::sample(Rng& rng) const {
    if (degenerate_) {
        return degenerate_value_;
    }
    const double x = family_ == Family::Gamma ? rng.gamma(a_, b_) : rng.lognormal(a_, b_);
    if (x > 1e9) {
        return 1'000'000'000;
    }
    return std::max(1, static_cast<int>(std::lround(x)));
}

DiscretizedDistribution patience_distribution(const PopulationParams& params) {
    return {DiscretizedDistribution::Family::Gamma, params.patience_mean_min, params.patience_sd_min};
}

int sample_patience(const PopulationParams& params, Rng& rng) {
    return patience_distribution(params).sample(rng);
}

DiscretizedDistribution chat_length_distribution(const PopulationParams& params) {
    return {DiscretizedDistribution::Family::LogNormal, params.chat_len_mean_min,
            params.chat_len_sd_min};
}

int sample_chat_length(const PopulationParams& params, Rng& rng) {
    return chat_length_distribution(params).sample(rng);
}

double sample_decision_time(const PopulationParams& params, Rng& rng) {
    return rng.exponential(params.decision_rate_per_min);
}

// --- AgentFactory ------------------------------------------------------------------

AgentFactory::AgentFactory(PopulationParams params)
    : params_((params.validate(), params)), patience_(patience_distribution(params_)) {}

Agent AgentFactory::make_agent(AgentId id, Role role, int arrival_minute, Rng& attribute_rng,
                               Rng& patience_rng) const {
    Agent a;
    a.id = id;
    a.role = role;
    a.arrival_minute = arrival_minute;
    a.state = AgentState::Waiting;

    const auto& gw =
        role == Role::Seeker ? params_.seeker_gender_weights : params_.counselor_gender_weights;
    a.gender = kAllGenders[attribute_rng.categorical(gw)];

    const double teen_fraction =
        role == Role::Seeker ? params_.seeker_teen_fraction : params_.counselor_teen_fraction;
    if (attribute_rng.bernoulli(teen_fraction)) {
        a.birth_year = static_cast<int>(
            attribute_rng.uniform_int(kTeenBirthYearAfter + 1, params_.birth_year_max));
    } else {
        a.birth_year =
            static_cast<int>(attribute_rng.uniform_int(params_.birth_year_min, kTeenBirthYearAfter));
    }
    a.signup_day =
        static_cast<int>(attribute_rng.uniform_int(params_.signup_day_min, params_.signup_day_max));
    a.experience_level = static_cast<int>(attribute_rng.categorical(params_.experience_weights));

    if (role == Role::Seeker) {
        a.patience_min = patience_.sample(patience_rng);
    }
    return a;
}

std::vector<Agent> generate_arrivals(const AgentFactory& factory, IdSource& ids, int target,
                                     int current_online, Role role, int minute,
                                     Rng& attribute_rng, Rng& patience_rng) {
    if (target < 0 || current_online < 0) {
        throw std::invalid_argument("generate_arrivals: negative count");
    }
    const int shortfall = std::max(0, target - current_online);
    std::vector<Agent> out;
    out.reserve(static_cast<std::size_t>(shortfall));
    for (int i = 0; i < shortfall; ++i) {
        out.push_back(factory.make_agent(ids.next(), role, minute, attribute_rng, patience_rng));
    }
    return out;
}

} // namespace matchlab
