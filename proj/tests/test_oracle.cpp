#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <stdexcept>

#include "matchlab/oracle.hpp"

using namespace matchlab;

namespace {

Agent person(Role role, Gender g, int birth_year, int experience, int signup_day = 17000) {
    Agent a;
    a.role = role;
    a.gender = g;
    a.birth_year = birth_year;
    a.experience_level = experience;
    a.signup_day = signup_day;
    if (role == Role::Seeker) a.patience_min = 5;
    return a;
}

OracleParams zero_weights() {
    OracleParams p;
    p.weights = {0, 0, 0, 0, 0};
    return p;
}

} // namespace

TEST_CASE("rating bucket counts cutpoints at or below the quality") {
    const std::array<double, 4> cuts{-1.0, 0.0, 1.0, 2.0};
    CHECK(rating_bucket(-5.0, cuts) == 1);
    CHECK(rating_bucket(-1.0, cuts) == 2);
    CHECK(rating_bucket(-0.5, cuts) == 2);
    CHECK(rating_bucket(0.0, cuts) == 3);
    CHECK(rating_bucket(1.5, cuts) == 4);
    CHECK(rating_bucket(2.0, cuts) == 5);
    CHECK(rating_bucket(100.0, cuts) == 5);
}

TEST_CASE("zero weights give a zero latent for any pair") {
    const OracleParams p = zero_weights();
    const Agent s = person(Role::Seeker, Gender::NonBinary, 2005, 0, 16100);
    const Agent c = person(Role::Counselor, Gender::CisMale, 1955, 4, 18400);
    CHECK(latent_score(s, c, p) == 0.0);
}

TEST_CASE("latent prefers age-close, same-gender and minority-matched pairs") {
    const OracleParams p;
    const Agent s = person(Role::Seeker, Gender::CisFemale, 1990, 2);
    const Agent twin = person(Role::Counselor, Gender::CisFemale, 1990, 2);
    const Agent older = person(Role::Counselor, Gender::CisFemale, 1960, 2);
    CHECK(latent_score(s, twin, p) > latent_score(s, older, p));

    const Agent other_gender = person(Role::Counselor, Gender::CisMale, 1990, 2);
    CHECK(latent_score(s, twin, p) > latent_score(s, other_gender, p));

    const Agent ms = person(Role::Seeker, Gender::TransFemale, 1990, 2);
    const Agent mc = person(Role::Counselor, Gender::NonBinary, 1990, 2);
    const Agent cis = person(Role::Counselor, Gender::CisMale, 1990, 2);
    CHECK(latent_score(ms, mc, p) > latent_score(ms, cis, p));

    const Agent novice = person(Role::Counselor, Gender::CisFemale, 1990, 0);
    CHECK(latent_score(s, twin, p) > latent_score(s, novice, p));
}

TEST_CASE("swapping roles changes the latent only through counselor tenure") {
    OracleParams p;
    const AgentFactory factory{PopulationParams{}};
    Rng rng(11, "test");
    for (int i = 0; i < 500; ++i) {
        Agent a = factory.make_agent(0, Role::Seeker, 0, rng, rng);
        Agent b = factory.make_agent(1, Role::Counselor, 0, rng, rng);
        const double forward = latent_score(a, b, p);
        const double backward = latent_score(b, a, p);
        const double ta = std::max(0.0, (p.tenure_reference_day - a.signup_day) / 365.25);
        const double tb = std::max(0.0, (p.tenure_reference_day - b.signup_day) / 365.25);
        const double w = p.weights.counselor_tenure_per_year;
        CHECK(forward - backward == doctest::Approx(w * (tb - ta)).epsilon(1e-9));
    }
    p.weights.counselor_tenure_per_year = 0.0;
    const Agent a = person(Role::Seeker, Gender::Other, 1980, 1, 16200);
    const Agent b = person(Role::Counselor, Gender::CisMale, 2001, 3, 18000);
    CHECK(latent_score(a, b, p) == latent_score(b, a, p));
}

TEST_CASE("noise-free labels are the same on every call") {
    OracleParams p;
    p.noise_sd = 0.0;
    p.block_noise_scale = 0.0;
    const Agent s = person(Role::Seeker, Gender::CisMale, 1985, 1);
    const Agent c = person(Role::Counselor, Gender::CisFemale, 1970, 3);
    Rng rng(5, "test");
    const OutcomeLabels first = emit_labels(s, c, p, rng);
    for (int i = 0; i < 200; ++i) CHECK(emit_labels(s, c, p, rng) == first);
    CHECK(first.rating == rating_bucket(latent_score(s, c, p), p.cutpoints));
}

TEST_CASE("block probability follows the logistic in the block logit") {
    OracleParams p;
    p.block_base_prob = 0.1;
    const Agent s = person(Role::Seeker, Gender::CisMale, 1985, 1);
    const Agent c = person(Role::Counselor, Gender::CisFemale, 1960, 4);
    const double lat = latent_score(s, c, p);
    const double eta = std::log(0.1 / 0.9) - p.block_risk.latent * lat;
    CHECK(block_logit(s, c, lat, p) == doctest::Approx(eta));
    const double prob = block_probability(s, c, p);
    CHECK(prob == doctest::Approx(1.0 / (1.0 + std::exp(-eta))));

    Rng rng(9, "test");
    int blocks = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) blocks += emit_labels(s, c, p, rng).block;
    CHECK(std::abs(blocks / double(n) - prob) < 4.0 * std::sqrt(prob * (1 - prob) / n));
}

TEST_CASE("params validation") {
    OracleParams p;
    CHECK_NOTHROW(p.validate());
    p.cutpoints = {0.0, 0.0, 1.0, 2.0};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = OracleParams{};
    p.block_base_prob = 1.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = OracleParams{};
    p.noise_sd = -0.1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("calibration reaches the platform marginals and is a fixed point") {
    const AgentFactory factory{PopulationParams{}};
    CalibrationTargets targets;
    const CalibrationResult first = calibrate(OracleParams{}, factory, targets);
    CHECK(first.changed);
    CHECK(first.iterations <= 100);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(std::abs(first.achieved_rating[k] - kTargetRatingShares[k]) <= 0.015);
    }
    CHECK(std::abs(first.achieved_block - kTargetBlockShare) <= 0.01);
    CHECK_NOTHROW(first.params.validate());

    const CalibrationResult again = calibrate(first.params, factory, targets);
    CHECK_FALSE(again.changed);
    CHECK(again.params == first.params);

    // Fresh pairs, not the calibration sample.
    const Marginals fresh = estimate_marginals(first.params, factory, 1000000, 99);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(std::abs(fresh.rating[k] - kTargetRatingShares[k]) <= 0.015);
    }
    CHECK(std::abs(fresh.block - kTargetBlockShare) <= 0.01);

    // Empirical labels, drawn through emit_labels rather than the closed forms.
    Rng rng(1234, "test");
    std::array<long, 5> counts{};
    long blocks = 0;
    const long n = 200000;
    for (long i = 0; i < n; ++i) {
        const Agent s = factory.make_agent(0, Role::Seeker, 0, rng, rng);
        const Agent c = factory.make_agent(1, Role::Counselor, 0, rng, rng);
        const OutcomeLabels l = emit_labels(s, c, first.params, rng);
        ++counts[l.rating - 1];
        blocks += l.block;
    }
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(std::abs(counts[k] / double(n) - kTargetRatingShares[k]) <= 0.015);
    }
    CHECK(std::abs(blocks / double(n) - kTargetBlockShare) <= 0.01);
}

TEST_CASE("raising the rating-1 target raises the lowest cutpoint") {
    const AgentFactory factory{PopulationParams{}};
    CalibrationTargets targets;
    targets.sample_pairs = 50000;
    const CalibrationResult base = calibrate(OracleParams{}, factory, targets);
    CalibrationTargets more_ones = targets;
    more_ones.rating[0] += 0.05;
    more_ones.rating[4] -= 0.05;
    const CalibrationResult shifted = calibrate(OracleParams{}, factory, more_ones);
    CHECK(shifted.params.cutpoints[0] > base.params.cutpoints[0]);
    CHECK(shifted.achieved_rating[0] > base.achieved_rating[0]);
}

TEST_CASE("rating mass at or below a bucket grows as its cutpoint rises") {
    const AgentFactory factory{PopulationParams{}};
    const OracleParams base = calibrate(OracleParams{}, factory, CalibrationTargets{}).params;
    for (std::size_t k = 0; k < 4; ++k) {
        OracleParams raised = base;
        raised.cutpoints[k] += 0.2;
        if (k < 3) raised.cutpoints[k] = std::min(raised.cutpoints[k], base.cutpoints[k + 1] - 1e-6);
        const Marginals a = estimate_marginals(base, factory, 50000, 3);
        const Marginals b = estimate_marginals(raised, factory, 50000, 3);
        const double mass_a = std::accumulate(a.rating.begin(), a.rating.begin() + k + 1, 0.0);
        const double mass_b = std::accumulate(b.rating.begin(), b.rating.begin() + k + 1, 0.0);
        CHECK(mass_b >= mass_a);
    }
}

TEST_CASE("calibration reports an unreachable target") {
    const AgentFactory factory{PopulationParams{}};
    CalibrationTargets targets;
    targets.sample_pairs = 2000;
    targets.tolerance = 1e-9;
    targets.max_iterations = 5;
    CHECK_THROWS_AS(calibrate(OracleParams{}, factory, targets), CalibrationError);
}

TEST_CASE("top latent decile blocks less than the bottom decile") {
    const AgentFactory factory{PopulationParams{}};
    const OracleParams p = calibrate(OracleParams{}, factory, CalibrationTargets{}).params;
    Rng rng(77, "test");
    std::vector<std::pair<double, int>> rows;
    for (int i = 0; i < 100000; ++i) {
        const Agent s = factory.make_agent(0, Role::Seeker, 0, rng, rng);
        const Agent c = factory.make_agent(1, Role::Counselor, 0, rng, rng);
        rows.emplace_back(latent_score(s, c, p), emit_labels(s, c, p, rng).block);
    }
    std::sort(rows.begin(), rows.end());
    const std::size_t tenth = rows.size() / 10;
    double low = 0, high = 0;
    for (std::size_t i = 0; i < tenth; ++i) {
        low += rows[i].second;
        high += rows[rows.size() - 1 - i].second;
    }
    CHECK(high < low);
}

TEST_CASE("corpus split, determinism and class skew") {
    const AgentFactory factory{PopulationParams{}};
    const OracleParams p = calibrate(OracleParams{}, factory, CalibrationTargets{}).params;
    Rng a(3, "test"), b(3, "test");
    const auto small = generate_corpus(100, p, factory, a);
    CHECK(std::count_if(small.begin(), small.end(), [](const LabeledPair& r) { return r.train; }) == 80);
    CHECK(small.front().train);
    CHECK_FALSE(small.back().train);
    const auto twin = generate_corpus(100, p, factory, b);
    for (std::size_t i = 0; i < small.size(); ++i) {
        CHECK(small[i].raw_features() == twin[i].raw_features());
        CHECK(small[i].rating == twin[i].rating);
        CHECK(small[i].block == twin[i].block);
    }

    Rng c(4, "test");
    const auto full = generate_corpus(kDefaultCorpusSize, p, factory, c);
    std::array<int, 5> counts{};
    for (const auto& r : full) ++counts[r.rating - 1];
    CHECK(*std::max_element(counts.begin(), counts.end()) == counts[4]);
    CHECK(counts[4] > 0.6 * full.size());

    Rng d(5, "test");
    CHECK_THROWS_AS(generate_corpus(0, p, factory, d), std::invalid_argument);
}

TEST_CASE("corpus CSV round trip") {
    const AgentFactory factory{PopulationParams{}};
    Rng rng(8, "test");
    const auto corpus = generate_corpus(50, OracleParams{}, factory, rng);
    std::stringstream ss;
    write_corpus_csv(ss, corpus);
    std::string header;
    std::getline(std::stringstream(ss.str()), header);
    CHECK(header.rfind("split,seeker_gender,", 0) == 0);
    const auto back = read_corpus_csv(ss);
    REQUIRE(back.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(back[i].raw_features() == corpus[i].raw_features());
        CHECK(back[i].rating == corpus[i].rating);
        CHECK(back[i].block == corpus[i].block);
        CHECK(back[i].train == corpus[i].train);
        CHECK(back[i].seeker.patience_min == corpus[i].seeker.patience_min);
    }
    std::stringstream bad("split,x\ntrain,1,2\n");
    CHECK_THROWS_AS(read_corpus_csv(bad), std::runtime_error);
}

TEST_CASE("oracle params JSON round trip") {
    OracleParams p;
    p.cutpoints = {-3.1, -2.9, -2.5, -2.0};
    p.block_base_prob = 0.0013;
    p.weights.minority_match = 1.75;
    nlohmann::json j = p;
    CHECK(j["format"] == "matchlab.oracle");
    const OracleParams back = j.get<OracleParams>();
    CHECK(back == p);
    j.erase("cutpoints");
    CHECK_THROWS(j.get<OracleParams>());
}
