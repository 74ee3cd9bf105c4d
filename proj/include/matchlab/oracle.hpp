#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/core.hpp"
#include "matchlab/population.hpp"
#include "matchlab/rng.hpp"

namespace matchlab {

// Synthetic ground truth for chat outcomes. Every (seeker, counselor) pair
// gets a latent compatibility from its attributes; ratings bucket that
// latent plus Gaussian noise, and blocking is a logistic event in the
// negative latent.

struct PairWeights {
    double gender_match = 1.0;
    double minority_match = 5.0;
    double age_gap_per_decade = 1.5;
    double experience_gap = 0.25;
    double counselor_tenure_per_year = 0.10;

    bool operator==(const PairWeights&) const = default;
};

struct BlockRiskWeights {
    double latent = 1.6;          // multiplies -latent in the block logit
    double teen_seeker = -2.5;
    double minority_seeker = -2.5;

    bool operator==(const BlockRiskWeights&) const = default;
};

struct OracleParams {
    PairWeights weights;
    std::array<double, 4> cutpoints{-2.2, -1.9, -1.6, -1.2};
    double block_base_prob = 0.02;
    BlockRiskWeights block_risk;
    double noise_sd = 0.25;
    double block_noise_scale = 1.0;  // scale of the logistic variate in the block draw
    int tenure_reference_day = 18505;

    /// Cutpoints strictly increasing, probabilities in [0,1], scales >= 0.
    void validate() const;

    bool operator==(const OracleParams&) const = default;
};

/// Deterministic part of pair compatibility (no noise, no intercept).
double latent_score(const Agent& seeker, const Agent& counselor, const OracleParams& params);

/// Rating bucket in {1..5}: 1 + number of cutpoints at or below `quality`.
int rating_bucket(double quality, const std::array<double, 4>& cutpoints);

/// Block logit before noise; P(block) = logistic(logit / block_noise_scale).
double block_logit(const Agent& seeker, const Agent& counselor, double latent,
                   const OracleParams& params);
double block_probability(const Agent& seeker, const Agent& counselor, const OracleParams& params);

struct OutcomeLabels {
    int rating = 5;
    int block = 0;
    bool operator==(const OutcomeLabels&) const = default;
};

OutcomeLabels emit_labels(const Agent& seeker, const Agent& counselor, const OracleParams& params,
                          Rng& rng);

// Platform marginals: ratings 1..5 and the blocked-pair share.
inline constexpr std::array<double, 5> kTargetRatingShares{0.1518, 0.0351, 0.0456, 0.1063, 0.6612};
inline constexpr double kTargetBlockShare = 0.053;

struct CalibrationTargets {
    std::array<double, 5> rating = kTargetRatingShares;
    double block = kTargetBlockShare;
    double tolerance = 0.001;         // absolute, per share, on the calibration sample
    std::size_t sample_pairs = 200000;
    std::uint64_t seed = 20200101;
    int max_iterations = 100;         // per bisection
};

struct CalibrationResult {
    OracleParams params;
    std::array<double, 5> achieved_rating{};
    double achieved_block = 0.0;
    int iterations = 0;               // largest bisection count used
    bool changed = false;
};

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Marginals emitted by `params` over random pairs drawn from `sampler`,
/// estimated on a fixed sample (common random numbers).
struct Marginals {
    std::array<double, 5> rating{};
    double block = 0.0;
};
Marginals estimate_marginals(const OracleParams& params, const AgentFactory& sampler,
                             std::size_t n_pairs, std::uint64_t seed);

/// Moves the cutpoints and block_base_prob by monotone bisection until the
/// emitted marginals are within tolerance of `targets`. Parameters already
/// within tolerance come back unchanged. Throws CalibrationError when a
/// bisection does not converge within max_iterations.
CalibrationResult calibrate(const OracleParams& start, const AgentFactory& sampler,
                            const CalibrationTargets& targets);

/// One labelled (seeker, counselor) pair of the synthetic training corpus.
struct LabeledPair {
    Agent seeker;
    Agent counselor;
    int rating = 5;
    int block = 0;
    bool train = true;

    /// gender index, birth year, signup day, experience (seeker then counselor).
    std::array<double, 8> raw_features() const;
};

inline constexpr double kTrainFraction = 0.8;
inline constexpr std::size_t kDefaultCorpusSize = 23587;

/// `n_pairs` random pairs with oracle labels; the first floor(0.8 n) rows are
/// the training split, the rest the test split.
std::vector<LabeledPair> generate_corpus(std::size_t n_pairs, const OracleParams& params,
                                         const AgentFactory& sampler, Rng& rng);

/// Columnar CSV with a header row; see kCorpusColumns for the order.
extern const std::array<const char*, 12> kCorpusColumns;
void write_corpus_csv(std::ostream& out, const std::vector<LabeledPair>& corpus);
std::vector<LabeledPair> read_corpus_csv(std::istream& in);

void to_json(nlohmann::json& j, const OracleParams& p);
void from_json(const nlohmann::json& j, OracleParams& p);

} // namespace matchlab
