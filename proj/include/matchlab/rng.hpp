#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace matchlab {

/// Deterministic random stream.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// implements every distribution locally, so a given (seed, label) pair yields
/// the same draws with any standard library on any platform.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream_label);

    /// Child stream whose seed depends on this stream's seed and `label` only
    /// (not on how many draws the parent has made).
    Rng fork(std::string_view label) const;

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform in (0, 1).
    double uniform_open();
    /// Unbiased integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// Unbiased integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }

    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    double exponential(double rate);
    double gamma(double shape, double scale);
    double lognormal(double mu, double sigma);

    /// Index drawn proportionally to non-negative `weights`.
    std::size_t categorical(std::span<const double> weights);

    std::uint64_t seed() const { return seed_; }

private:
    explicit Rng(std::uint64_t derived_seed);

    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// Stream for (seed, label). Identical inputs give identical sequences;
/// different labels give unrelated sequences.
Rng seeded_rng(std::uint64_t seed, std::string_view stream_label);

std::uint64_t splitmix64(std::uint64_t x);

} // namespace matchlab
