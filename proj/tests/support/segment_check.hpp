#pragma once

// Checks that oversampled rows lie on a segment between an original row x of
// their class and one of x's k nearest same-class neighbours (ties included).
// Cost is one distance per (synthetic row, class row), so it scales to the
// full training corpus.

#include <algorithm>
#include <cmath>
#include <vector>

#include "matchlab/predictors.hpp"

namespace segcheck {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
}

inline bool collinear_within(std::span<const double> x, std::span<const double> y, std::span<const double> z) {
    std::size_t widest = 0;
    for (std::size_t d = 1; d < x.size(); ++d) {
        if (std::abs(y[d] - x[d]) > std::abs(y[widest] - x[widest])) widest = d;
    }
    const double span = y[widest] - x[widest];
    if (span == 0.0) return false;
    const double u = (z[widest] - x[widest]) / span;
    if (u < -1e-12 || u > 1 + 1e-12) return false;
    for (std::size_t d = 0; d < x.size(); ++d) {
        if (std::abs(x[d] + u * (y[d] - x[d]) - z[d]) > 1e-9) return false;
    }
    return true;
}

/// Number of rows past `original.size()` in `balanced` that fail the check.
inline std::size_t count_off_segment(const matchlab::Dataset& original, const matchlab::Dataset& balanced, int k) {
    std::size_t bad = 0;
    for (int c = 0; c < original.class_count(); ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < original.size(); ++i) {
            if (original.label(i) == c) rows.push_back(i);
        }
        const std::size_t n = rows.size();
        if (n < 2) continue;
        const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);

        // k-th neighbour distance of each row, and every row within it.
        std::vector<double> radius(n);
        std::vector<std::vector<std::size_t>> near(n);
        std::vector<double> d(n);
        for (std::size_t a = 0; a < n; ++a) {
            std::vector<double> others;
            for (std::size_t b = 0; b < n; ++b) {
                d[b] = sq_dist(original.row(rows[a]), original.row(rows[b]));
                if (b != a) others.push_back(d[b]);
            }
            std::nth_element(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(kk - 1), others.end());
            radius[a] = others[kk - 1] * (1 + 1e-12) + 1e-15;
            for (std::size_t b = 0; b < n; ++b) {
                if (b != a && d[b] <= radius[a]) near[a].push_back(b);
            }
        }

        for (std::size_t i = original.size(); i < balanced.size(); ++i) {
            if (balanced.label(i) != c) continue;
            const auto z = balanced.row(i);
            bool ok = false;
            for (std::size_t a = 0; a < n && !ok; ++a) {
                const auto x = original.row(rows[a]);
                const double dz = sq_dist(z, x);
                if (dz > radius[a]) continue;
                if (dz < 1e-24) {
                    ok = true;
                    break;
                }
                for (std::size_t b : near[a]) {
                    if (collinear_within(x, original.row(rows[b]), z)) {
                        ok = true;
                        break;
                    }
                }
            }
            if (!ok) ++bad;
        }
    }
    return bad;
}

} // namespace segcheck
