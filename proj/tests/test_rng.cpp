#include "doctest.h"

#include <cmath>
#include <vector>

#include "matchlab/rng.hpp"

using namespace matchlab;

namespace {

std::vector<std::uint64_t> first_draws(Rng rng, int n) {
    std::vector<std::uint64_t> out;
    for (int i = 0; i < n; ++i) out.push_back(rng.next_u64());
    return out;
}

} // namespace

TEST_CASE("same seed and label give the same stream") {
    CHECK(first_draws(seeded_rng(42, "arrivals"), 1000) == first_draws(seeded_rng(42, "arrivals"), 1000));
}

TEST_CASE("labels and seeds separate streams") {
    const auto base = first_draws(seeded_rng(42, "arrivals"), 1000);
    CHECK(base != first_draws(seeded_rng(42, "patience"), 1000));
    CHECK(base != first_draws(seeded_rng(43, "arrivals"), 1000));
}

TEST_CASE("fork does not depend on parent draws") {
    Rng a = seeded_rng(7, "parent");
    Rng b = seeded_rng(7, "parent");
    for (int i = 0; i < 100; ++i) b.next_u64();
    CHECK(first_draws(a.fork("child"), 50) == first_draws(b.fork("child"), 50));
    CHECK(first_draws(a.fork("child"), 50) != first_draws(a.fork("other"), 50));
}

TEST_CASE("pinned output guards against platform drift") {
    // Values recorded from this implementation; any change breaks reproducibility of old runs.
    Rng r = seeded_rng(42, "arrivals");
    CHECK(r.next_u64() == 5737732004489357749ULL);
    CHECK(r.uniform() == doctest::Approx(0.8306100525445993).epsilon(1e-15));
    CHECK(r.below(1000) == 663);
    CHECK(r.normal() == doctest::Approx(-0.73879443453416871).epsilon(1e-15));
    CHECK(r.exponential(1.25) == doctest::Approx(1.0145339031487945).epsilon(1e-15));
}

TEST_CASE("below is in range and roughly uniform") {
    Rng r = seeded_rng(1, "below");
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const auto v = r.below(7);
        REQUIRE(v < 7);
        ++counts[v];
    }
    for (int c : counts) CHECK(std::abs(c - n / 7) < 400);
    CHECK(r.below(1) == 0);
}

TEST_CASE("uniform_int covers both ends") {
    Rng r = seeded_rng(3, "int");
    bool lo = false;
    bool hi = false;
    for (int i = 0; i < 10000; ++i) {
        const auto v = r.uniform_int(-2, 2);
        REQUIRE(v >= -2);
        REQUIRE(v <= 2);
        lo = lo || v == -2;
        hi = hi || v == 2;
    }
    CHECK(lo);
    CHECK(hi);
}

TEST_CASE("distribution moments") {
    Rng r = seeded_rng(5, "moments");
    const int n = 400000;
    double s_norm = 0, ss_norm = 0, s_exp = 0, s_gam = 0, ss_gam = 0, s_logn = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s_norm += z;
        ss_norm += z * z;
        s_exp += r.exponential(1.25);
        const double g = r.gamma(1.6, 2.5);
        s_gam += g;
        ss_gam += g * g;
        s_logn += r.lognormal(0.5, 0.4);
    }
    CHECK(s_norm / n == doctest::Approx(0.0).epsilon(0.01).scale(1.0));
    CHECK(ss_norm / n == doctest::Approx(1.0).epsilon(0.01));
    CHECK(s_exp / n == doctest::Approx(0.8).epsilon(0.01));
    const double gm = s_gam / n;
    CHECK(gm == doctest::Approx(4.0).epsilon(0.01));
    CHECK(ss_gam / n - gm * gm == doctest::Approx(10.0).epsilon(0.02));
    CHECK(s_logn / n == doctest::Approx(std::exp(0.5 + 0.08)).epsilon(0.01));
}

TEST_CASE("gamma with shape below one") {
    Rng r = seeded_rng(9, "small-shape");
    double s = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double g = r.gamma(0.4, 1.0);
        REQUIRE(g >= 0.0);
        s += g;
    }
    CHECK(s / n == doctest::Approx(0.4).epsilon(0.02));
}

TEST_CASE("categorical follows weights and skips zeros") {
    Rng r = seeded_rng(11, "cat");
    const std::vector<double> w{0.2, 0.0, 0.8};
    std::vector<int> counts(3, 0);
    for (int i = 0; i < 100000; ++i) ++counts[r.categorical(w)];
    CHECK(counts[1] == 0);
    CHECK(counts[0] / 100000.0 == doctest::Approx(0.2).epsilon(0.03));
}

TEST_CASE("bad distribution arguments throw") {
    Rng r = seeded_rng(1, "bad");
    CHECK_THROWS(r.below(0));
    CHECK_THROWS(r.exponential(0.0));
    CHECK_THROWS(r.gamma(-1.0, 1.0));
    const std::vector<double> none{0.0, 0.0};
    CHECK_THROWS(r.categorical(none));
}
