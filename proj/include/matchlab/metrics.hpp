#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/records.hpp"

namespace matchlab {

/// Outcome metrics of one run. A metric whose denominator is empty is absent.
struct OutcomeReport {
    std::optional<double> pct_high_rating;         // share of matches rated >= 4
    std::optional<double> pct_low_rating;          // share rated below 3
    std::optional<double> avg_rating;
    std::optional<double> pct_blocked_pairs;
    std::optional<double> avg_wait_matched_min;
    std::optional<double> avg_wait_unmatched_min;
    std::optional<double> matching_rate;           // matched / (matched + abandoned)
    std::size_t matched = 0;
    std::size_t abandoned = 0;

    bool operator==(const OutcomeReport&) const = default;
};

inline constexpr std::size_t kMetricCount = 7;
extern const std::array<std::string_view, kMetricCount> kMetricNames;
/// Column headers for the plain-text comparison table.
extern const std::array<std::string_view, kMetricCount> kMetricLabels;
/// True for metrics where larger is better.
extern const std::array<bool, kMetricCount> kHigherIsBetter;

std::optional<double> metric_value(const OutcomeReport& r, std::size_t index);

/// Which labels rating/blocking metrics read: predictor output or oracle ground truth.
enum class OutcomeSource { Predicted, Oracle };

OutcomeReport compute_outcomes(std::span<const MatchRecord> matches,
                               std::span<const AbandonRecord> abandons,
                               OutcomeSource source = OutcomeSource::Predicted);

struct SubgroupReport {
    std::optional<OutcomeReport> teen;
    std::optional<OutcomeReport> non_teen;
    std::optional<OutcomeReport> minority;
    std::optional<OutcomeReport> non_minority;

    bool operator==(const SubgroupReport&) const = default;
};

/// compute_outcomes restricted to each seeker subgroup; a subgroup with no
/// records is absent.
SubgroupReport subgroup_breakdown(std::span<const MatchRecord> matches,
                                  std::span<const AbandonRecord> abandons,
                                  OutcomeSource source = OutcomeSource::Predicted);

/// Product-moment correlation. Throws std::invalid_argument on length
/// mismatch, fewer than two points or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct Bucket {
    double lo = 0.0;   // inclusive
    double hi = 0.0;   // exclusive
    double reference_share = 0.0;
};

struct HistogramComparison {
    std::vector<double> shares;
    std::vector<double> reference;
    double max_abs_deviation = 0.0;
    std::optional<double> correlation;  // absent when either side has no spread
    bool within_tolerance = false;
};

/// Bins `sample` into `buckets` and compares bucket shares with the reference.
/// Throws std::invalid_argument for an empty sample or a value outside every bucket.
HistogramComparison histogram_compare(std::span<const double> sample,
                                      std::span<const Bucket> buckets, double tolerance);

/// Mean and 95% normal-approximation half width of one metric across runs.
struct MetricSummary {
    double mean = 0.0;
    double half_width = 0.0;
    std::size_t n = 0;
};

struct AggregateReport {
    std::array<std::optional<MetricSummary>, kMetricCount> metrics;
    std::size_t runs = 0;
};

AggregateReport aggregate(std::span<const OutcomeReport> reports);

/// One row per label, one column per metric, percentages where the metric is a share.
std::string format_table(const std::vector<std::pair<std::string, AggregateReport>>& rows);

nlohmann::json to_json_value(const OutcomeReport& r);
void to_json(nlohmann::json& j, const OutcomeReport& r);
void from_json(const nlohmann::json& j, OutcomeReport& r);
void to_json(nlohmann::json& j, const SubgroupReport& r);
void from_json(const nlohmann::json& j, SubgroupReport& r);
void to_json(nlohmann::json& j, const AggregateReport& r);
void to_json(nlohmann::json& j, const HistogramComparison& r);

} // namespace matchlab
