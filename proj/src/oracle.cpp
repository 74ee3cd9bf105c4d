#include "matchlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace matchlab {

namespace {

double logistic(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    p = std::clamp(p, 1e-15, 1.0 - 1e-15);
    return std::log(p / (1.0 - p));
}

double tenure_years(const Agent& a, int reference_day) {
    return std::max(0.0, (reference_day - a.signup_day) / 365.25);
}

double block_from_logit(double logit_value, double scale) {
    if (scale <= 0.0) {
        return logit_value > 0.0 ? 1.0 : 0.0;
    }
    return logistic(logit_value / scale);
}

// Pairs used for calibration: latent, a standard-normal noise draw and the
// block logit without its intercept.
struct CalibrationSample {
    std::vector<double> latent;
    std::vector<double> noise;
    std::vector<double> block_rest;
};

CalibrationSample draw_calibration_sample(const OracleParams& params, const AgentFactory& sampler,
                                          std::size_t n_pairs, std::uint64_t seed) {
    Rng rng = seeded_rng(seed, "oracle.calibration");
    CalibrationSample s;
    s.latent.reserve(n_pairs);
    s.noise.reserve(n_pairs);
    s.block_rest.reserve(n_pairs);
    const double intercept = logit(params.block_base_prob);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const Agent seeker = sampler.make_agent(0, Role::Seeker, 0, rng, rng);
        const Agent counselor = sampler.make_agent(1, Role::Counselor, 0, rng, rng);
        const double lat = latent_score(seeker, counselor, params);
        s.latent.push_back(lat);
        s.noise.push_back(rng.normal());
        s.block_rest.push_back(block_logit(seeker, counselor, lat, params) - intercept);
    }
    return s;
}

double share_below(const CalibrationSample& s, double noise_sd, double cut) {
    std::size_t below = 0;
    for (std::size_t i = 0; i < s.latent.size(); ++i) {
        if (s.latent[i] + noise_sd * s.noise[i] < cut) {
            ++below;
        }
    }
    return static_cast<double>(below) / static_cast<double>(s.latent.size());
}

double expected_block_share(const CalibrationSample& s, double intercept, double scale) {
    double total = 0.0;
    for (double rest : s.block_rest) {
        total += block_from_logit(intercept + rest, scale);
    }
    return total / static_cast<double>(s.block_rest.size());
}

Marginals marginals_of(const CalibrationSample& s, const OracleParams& params) {
    Marginals m;
    double prev = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const double cum = share_below(s, params.noise_sd, params.cutpoints[k]);
        m.rating[k] = cum - prev;
        prev = cum;
    }
    m.rating[4] = 1.0 - prev;
    m.block = expected_block_share(s, logit(params.block_base_prob), params.block_noise_scale);
    return m;
}

} // namespace

void OracleParams::validate() const {
    for (std::size_t k = 1; k < cutpoints.size(); ++k) {
        if (!(cutpoints[k] > cutpoints[k - 1])) {
            throw std::invalid_argument("OracleParams.cutpoints must be strictly increasing");
        }
    }
    if (!(block_base_prob >= 0.0 && block_base_prob <= 1.0)) {
        throw std::invalid_argument("OracleParams.block_base_prob must lie in [0, 1]");
    }
    if (noise_sd < 0.0 || block_noise_scale < 0.0) {
        throw std::invalid_argument("OracleParams noise scales must be non-negative");
    }
}

double latent_score(const Agent& seeker, const Agent& counselor, const OracleParams& params) {
    const PairWeights& w = params.weights;
    double score = 0.0;
    if (seeker.gender == counselor.gender) {
        score += w.gender_match;
    }
    if (seeker.is_minority() && counselor.is_minority()) {
        score += w.minority_match;
    }
    score -= w.age_gap_per_decade * std::abs(seeker.birth_year - counselor.birth_year) / 10.0;
    score -= w.experience_gap * std::abs(seeker.experience_level - counselor.experience_level);
    score += w.counselor_tenure_per_year * tenure_years(counselor, params.tenure_reference_day);
    return score;
}

int rating_bucket(double quality, const std::array<double, 4>& cutpoints) {
    int rating = 1;
    for (double c : cutpoints) {
        if (quality >= c) {
            ++rating;
        }
    }
    return rating;
}

double block_logit(const Agent& seeker, const Agent& /*counselor*/, double latent,
                   const OracleParams& params) {
    const BlockRiskWeights& r = params.block_risk;
    double eta = logit(params.block_base_prob) - r.latent * latent;
    if (seeker.is_teen()) {
        eta += r.teen_seeker;
    }
    if (seeker.is_minority()) {
        eta += r.minority_seeker;
    }
    return eta;
}

double block_probability(const Agent& seeker, const Agent& counselor, const OracleParams& params) {
    const double lat = latent_score(seeker, counselor, params);
    return block_from_logit(block_logit(seeker, counselor, lat, params), params.block_noise_scale);
}

OutcomeLabels emit_labels(const Agent& seeker, const Agent& counselor, const OracleParams& params,
                          Rng& rng) {
    const double lat = latent_score(seeker, counselor, params);
    const double z = rng.normal();
    const double u = rng.uniform_open();
    OutcomeLabels out;
    out.rating = rating_bucket(lat + params.noise_sd * z, params.cutpoints);
    // Threshold on a logistic variate: P(block) = logistic(eta / scale).
    const double eta = block_logit(seeker, counselor, lat, params);
    const double noise = params.block_noise_scale * std::log(u / (1.0 - u));
    out.block = eta + noise > 0.0 ? 1 : 0;
    return out;
}

Marginals estimate_marginals(const OracleParams& params, const AgentFactory& sampler,
                             std::size_t n_pairs, std::uint64_t seed) {
    return marginals_of(draw_calibration_sample(params, sampler, n_pairs, seed), params);
}

CalibrationResult calibrate(const OracleParams& start, const AgentFactory& sampler,
                            const CalibrationTargets& targets) {
    start.validate();
    const CalibrationSample sample =
        draw_calibration_sample(start, sampler, targets.sample_pairs, targets.seed);

    CalibrationResult result;
    result.params = start;
    const double tol = targets.tolerance;

    std::array<double, 4> cumulative{};
    double running = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        running += targets.rating[k];
        cumulative[k] = running;
    }

    const auto [min_it, max_it] = std::minmax_element(sample.latent.begin(), sample.latent.end());
    const double span = 10.0 * (start.noise_sd + 1.0);
    const double global_lo = *min_it - span;
    const double global_hi = *max_it + span;

    // Each cutpoint only moves the boundary between buckets k and k+1, so the
    // cumulative share below it is monotone and can be bisected on its own.
    for (std::size_t k = 0; k < 4; ++k) {
        double cut = result.params.cutpoints[k];
        double share = share_below(sample, start.noise_sd, cut);
        if (std::abs(share - cumulative[k]) <= tol) {
            continue;
        }
        double lo = k == 0 ? global_lo : result.params.cutpoints[k - 1];
        double hi = global_hi;
        int iter = 0;
        while (std::abs(share - cumulative[k]) > tol) {
            if (++iter > targets.max_iterations) {
                std::ostringstream msg;
                msg << "calibration: cutpoint " << (k + 1) << " did not reach cumulative share "
                    << cumulative[k] << " within " << targets.max_iterations
                    << " iterations (last share " << share << ", tolerance " << tol << ")";
                throw CalibrationError(msg.str());
            }
            cut = 0.5 * (lo + hi);
            share = share_below(sample, start.noise_sd, cut);
            if (share < cumulative[k]) {
                lo = cut;
            } else {
                hi = cut;
            }
        }
        result.params.cutpoints[k] = cut;
        result.iterations = std::max(result.iterations, iter);
        result.changed = true;
    }
    for (std::size_t k = 1; k < 4; ++k) {
        if (!(result.params.cutpoints[k] > result.params.cutpoints[k - 1])) {
            result.params.cutpoints[k] = std::nextafter(result.params.cutpoints[k - 1], 1e300);
        }
    }

    double intercept = logit(start.block_base_prob);
    const double scale = start.block_noise_scale;
    double share = expected_block_share(sample, intercept, scale);
    if (std::abs(share - targets.block) > tol) {
        double lo = -40.0;
        double hi = 40.0;
        int iter = 0;
        while (std::abs(share - targets.block) > tol) {
            if (++iter > targets.max_iterations) {
                std::ostringstream msg;
                msg << "calibration: block share stuck at " << share << " (target "
                    << targets.block << ", tolerance " << tol << ")";
                throw CalibrationError(msg.str());
            }
            intercept = 0.5 * (lo + hi);
            share = expected_block_share(sample, intercept, scale);
            if (share < targets.block) {
                lo = intercept;
            } else {
                hi = intercept;
            }
        }
        result.params.block_base_prob = logistic(intercept);
        result.iterations = std::max(result.iterations, iter);
        result.changed = true;
    }

    const Marginals achieved = marginals_of(sample, result.params);
    result.achieved_rating = achieved.rating;
    result.achieved_block = achieved.block;
    return result;
}

// --- corpus ----------------------------------------------------------------------

std::array<double, 8> LabeledPair::raw_features() const {
    return {static_cast<double>(seeker.gender),    static_cast<double>(seeker.birth_year),
            static_cast<double>(seeker.signup_day), static_cast<double>(seeker.experience_level),
            static_cast<double>(counselor.gender),    static_cast<double>(counselor.birth_year),
            static_cast<double>(counselor.signup_day),
            static_cast<double>(counselor.experience_level)};
}

std::vector<LabeledPair> generate_corpus(std::size_t n_pairs, const OracleParams& params,
                                         const AgentFactory& sampler, Rng& rng) {
    if (n_pairs < 1) {
        throw std::invalid_argument("generate_corpus: n_pairs must be at least 1");
    }
    const auto n_train = static_cast<std::size_t>(std::floor(kTrainFraction * n_pairs));
    std::vector<LabeledPair> corpus;
    corpus.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        LabeledPair row;
        row.seeker = sampler.make_agent(static_cast<AgentId>(2 * i), Role::Seeker, 0, rng, rng);
        row.counselor =
            sampler.make_agent(static_cast<AgentId>(2 * i + 1), Role::Counselor, 0, rng, rng);
        const OutcomeLabels labels = emit_labels(row.seeker, row.counselor, params, rng);
        row.rating = labels.rating;
        row.block = labels.block;
        row.train = i < n_train;
        corpus.push_back(std::move(row));
    }
    return corpus;
}

const std::array<const char*, 12> kCorpusColumns{
    "split",
    "seeker_gender",    "seeker_birth_year",    "seeker_signup_day",    "seeker_experience",
    "counselor_gender", "counselor_birth_year", "counselor_signup_day", "counselor_experience",
    "rating",           "block",                "seeker_patience_min"};

void write_corpus_csv(std::ostream& out, const std::vector<LabeledPair>& corpus) {
    for (std::size_t i = 0; i < kCorpusColumns.size(); ++i) {
        out << (i ? "," : "") << kCorpusColumns[i];
    }
    out << '\n';
    for (const LabeledPair& row : corpus) {
        out << (row.train ? "train" : "test") << ',' << to_string(row.seeker.gender) << ','
            << row.seeker.birth_year << ',' << row.seeker.signup_day << ','
            << row.seeker.experience_level << ',' << to_string(row.counselor.gender) << ','
            << row.counselor.birth_year << ',' << row.counselor.signup_day << ','
            << row.counselor.experience_level << ',' << row.rating << ',' << row.block << ','
            << row.seeker.patience_min.value_or(1) << '\n';
    }
}

std::vector<LabeledPair> read_corpus_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("corpus CSV: missing header");
    }
    std::vector<LabeledPair> corpus;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != kCorpusColumns.size()) {
            throw std::runtime_error("corpus CSV line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(kCorpusColumns.size()) + " columns, got " +
                                     std::to_string(cells.size()));
        }
        LabeledPair row;
        const auto id = static_cast<AgentId>(2 * corpus.size());
        row.train = cells[0] == "train";
        row.seeker.id = id;
        row.seeker.role = Role::Seeker;
        row.seeker.gender = gender_from_string(cells[1]);
        row.seeker.birth_year = std::stoi(cells[2]);
        row.seeker.signup_day = std::stoi(cells[3]);
        row.seeker.experience_level = std::stoi(cells[4]);
        row.seeker.patience_min = std::stoi(cells[11]);
        row.counselor.id = id + 1;
        row.counselor.role = Role::Counselor;
        row.counselor.gender = gender_from_string(cells[5]);
        row.counselor.birth_year = std::stoi(cells[6]);
        row.counselor.signup_day = std::stoi(cells[7]);
        row.counselor.experience_level = std::stoi(cells[8]);
        row.rating = std::stoi(cells[9]);
        row.block = std::stoi(cells[10]);
        corpus.push_back(std::move(row));
    }
    return corpus;
}

// --- JSON ------------------------------------------------------------------------

void to_json(nlohmann::json& j, const OracleParams& p) {
    j = nlohmann::json{
        {"format", "matchlab.oracle"},
        {"version", 1},
        {"weights",
         {{"gender_match", p.weights.gender_match},
          {"minority_match", p.weights.minority_match},
          {"age_gap_per_decade", p.weights.age_gap_per_decade},
          {"experience_gap", p.weights.experience_gap},
          {"counselor_tenure_per_year", p.weights.counselor_tenure_per_year}}},
        {"cutpoints", p.cutpoints},
        {"block_base_prob", p.block_base_prob},
        {"block_risk",
         {{"latent", p.block_risk.latent},
          {"teen_seeker", p.block_risk.teen_seeker},
          {"minority_seeker", p.block_risk.minority_seeker}}},
        {"noise_sd", p.noise_sd},
        {"block_noise_scale", p.block_noise_scale},
        {"tenure_reference_day", p.tenure_reference_day},
    };
}

void from_json(const nlohmann::json& j, OracleParams& p) {
    OracleParams d;
    const auto& w = j.at("weights");
    d.weights.gender_match = w.at("gender_match").get<double>();
    d.weights.minority_match = w.at("minority_match").get<double>();
    d.weights.age_gap_per_decade = w.at("age_gap_per_decade").get<double>();
    d.weights.experience_gap = w.at("experience_gap").get<double>();
    d.weights.counselor_tenure_per_year = w.at("counselor_tenure_per_year").get<double>();
    d.cutpoints = j.at("cutpoints").get<std::array<double, 4>>();
    d.block_base_prob = j.at("block_base_prob").get<double>();
    const auto& r = j.at("block_risk");
    d.block_risk.latent = r.at("latent").get<double>();
    d.block_risk.teen_seeker = r.at("teen_seeker").get<double>();
    d.block_risk.minority_seeker = r.at("minority_seeker").get<double>();
    d.noise_sd = j.at("noise_sd").get<double>();
    d.block_noise_scale = j.value("block_noise_scale", 1.0);
    d.tenure_reference_day = j.value("tenure_reference_day", d.tenure_reference_day);
    d.validate();
    p = d;
}

} // namespace matchlab
