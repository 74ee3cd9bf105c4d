#include "matchlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace matchlab {

const std::array<std::string_view, kMetricCount> kMetricNames{
    "pct_high_rating",      "pct_low_rating",         "avg_rating",   "pct_blocked_pairs",
    "avg_wait_matched_min", "avg_wait_unmatched_min", "matching_rate"};

const std::array<std::string_view, kMetricCount> kMetricLabels{
    "High rating", "Low rating", "Avg rating", "Blocked", "Wait matched", "Wait unmatched",
    "Match rate"};

const std::array<bool, kMetricCount> kHigherIsBetter{true, false, true, false, false, false, true};

namespace {

constexpr std::array<bool, kMetricCount> kIsShare{true, true, false, true, false, false, true};

std::optional<double> OutcomeReport::*const kFields[kMetricCount] = {
    &OutcomeReport::pct_high_rating,      &OutcomeReport::pct_low_rating,
    &OutcomeReport::avg_rating,           &OutcomeReport::pct_blocked_pairs,
    &OutcomeReport::avg_wait_matched_min, &OutcomeReport::avg_wait_unmatched_min,
    &OutcomeReport::matching_rate};

} // namespace

std::optional<double> metric_value(const OutcomeReport& r, std::size_t index) {
    if (index >= kMetricCount) throw std::out_of_range("metric index out of range");
    return r.*kFields[index];
}

OutcomeReport compute_outcomes(std::span<const MatchRecord> matches,
                               std::span<const AbandonRecord> abandons, OutcomeSource source) {
    OutcomeReport r;
    r.matched = matches.size();
    r.abandoned = abandons.size();
    if (!matches.empty()) {
        long high = 0;
        long low = 0;
        long blocked = 0;
        long rating_sum = 0;
        long wait_sum = 0;
        for (const auto& m : matches) {
            const int rating = source == OutcomeSource::Predicted ? m.rating_pred : m.oracle_rating;
            const int block = source == OutcomeSource::Predicted ? m.block_pred : m.oracle_block;
            if (rating >= 4) ++high;
            if (rating < 3) ++low;
            blocked += block;
            rating_sum += rating;
            wait_sum += m.wait_min;
        }
        const double n = static_cast<double>(matches.size());
        r.pct_high_rating = high / n;
        r.pct_low_rating = low / n;
        r.avg_rating = rating_sum / n;
        r.pct_blocked_pairs = blocked / n;
        r.avg_wait_matched_min = wait_sum / n;
    }
    if (!abandons.empty()) {
        long wait_sum = 0;
        for (const auto& a : abandons) wait_sum += a.wait_min;
        r.avg_wait_unmatched_min = wait_sum / static_cast<double>(abandons.size());
    }
    if (r.matched + r.abandoned > 0) {
        r.matching_rate = static_cast<double>(r.matched) / static_cast<double>(r.matched + r.abandoned);
    }
    return r;
}

SubgroupReport subgroup_breakdown(std::span<const MatchRecord> matches,
                                  std::span<const AbandonRecord> abandons, OutcomeSource source) {
    auto restrict = [&](auto keep) -> std::optional<OutcomeReport> {
        std::vector<MatchRecord> m;
        std::vector<AbandonRecord> a;
        for (const auto& r : matches) {
            if (keep(r.teen, r.minority)) m.push_back(r);
        }
        for (const auto& r : abandons) {
            if (keep(r.teen, r.minority)) a.push_back(r);
        }
        if (m.empty() && a.empty()) return std::nullopt;
        return compute_outcomes(m, a, source);
    };
    SubgroupReport s;
    s.teen = restrict([](bool teen, bool) { return teen; });
    s.non_teen = restrict([](bool teen, bool) { return !teen; });
    s.minority = restrict([](bool, bool minority) { return minority; });
    s.non_minority = restrict([](bool, bool minority) { return !minority; });
    return s;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: series differ in length");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

HistogramComparison histogram_compare(std::span<const double> sample,
                                      std::span<const Bucket> buckets, double tolerance) {
    if (sample.empty()) throw std::invalid_argument("histogram_compare: empty sample");
    if (buckets.empty()) throw std::invalid_argument("histogram_compare: no buckets");
    std::vector<long> counts(buckets.size(), 0);
    for (double v : sample) {
        auto it = std::find_if(buckets.begin(), buckets.end(),
                               [v](const Bucket& b) { return v >= b.lo && v < b.hi; });
        if (it == buckets.end()) {
            throw std::invalid_argument("histogram_compare: value " + std::to_string(v) +
                                        " falls outside every bucket");
        }
        ++counts[static_cast<std::size_t>(it - buckets.begin())];
    }
    HistogramComparison h;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        h.shares.push_back(static_cast<double>(counts[i]) / static_cast<double>(sample.size()));
        h.reference.push_back(buckets[i].reference_share);
        h.max_abs_deviation = std::max(h.max_abs_deviation, std::abs(h.shares[i] - h.reference[i]));
    }
    if (buckets.size() >= 2) {
        try {
            h.correlation = pearson(h.shares, h.reference);
        } catch (const std::invalid_argument&) {
            h.correlation.reset();
        }
    }
    h.within_tolerance = h.max_abs_deviation <= tolerance;
    return h;
}

AggregateReport aggregate(std::span<const OutcomeReport> reports) {
    AggregateReport a;
    a.runs = reports.size();
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        std::vector<double> values;
        for (const auto& r : reports) {
            if (auto v = metric_value(r, m)) values.push_back(*v);
        }
        if (values.empty()) continue;
        MetricSummary s;
        s.n = values.size();
        double sum = 0.0;
        for (double v : values) sum += v;
        s.mean = sum / static_cast<double>(s.n);
        if (s.n > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - s.mean) * (v - s.mean);
            const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
            s.half_width = 1.96 * sd / std::sqrt(static_cast<double>(s.n));
        }
        a.metrics[m] = s;
    }
    return a;
}

std::string format_table(const std::vector<std::pair<std::string, AggregateReport>>& rows) {
    std::size_t label_width = 6;
    for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());

    auto cell = [](const std::optional<MetricSummary>& s, std::size_t m) {
        if (!s) return std::string("-");
        std::ostringstream out;
        out << std::fixed;
        if (kIsShare[m]) {
            out << std::setprecision(2) << 100.0 * s->mean << '%';
        } else {
            out << std::setprecision(2) << s->mean;
        }
        return out.str();
    };

    std::vector<std::size_t> widths(kMetricCount);
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        widths[m] = kMetricLabels[m].size();
        for (const auto& [_, agg] : rows) widths[m] = std::max(widths[m], cell(agg.metrics[m], m).size());
    }

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(label_width)) << "Policy";
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        out << "  " << std::right << std::setw(static_cast<int>(widths[m])) << kMetricLabels[m];
    }
    out << '\n';
    for (const auto& [label, agg] : rows) {
        out << std::left << std::setw(static_cast<int>(label_width)) << label;
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            out << "  " << std::right << std::setw(static_cast<int>(widths[m]))
                << cell(agg.metrics[m], m);
        }
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const OutcomeReport& r) {
    j = nlohmann::json::object();
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        const auto v = metric_value(r, m);
        j[std::string(kMetricNames[m])] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    j["matched"] = r.matched;
    j["abandoned"] = r.abandoned;
}

nlohmann::json to_json_value(const OutcomeReport& r) {
    nlohmann::json j;
    to_json(j, r);
    return j;
}

void from_json(const nlohmann::json& j, OutcomeReport& r) {
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        const auto& v = j.at(std::string(kMetricNames[m]));
        r.*kFields[m] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    r.matched = j.at("matched").get<std::size_t>();
    r.abandoned = j.at("abandoned").get<std::size_t>();
}

namespace {

nlohmann::json optional_report(const std::optional<OutcomeReport>& r) {
    return r ? to_json_value(*r) : nlohmann::json(nullptr);
}

std::optional<OutcomeReport> optional_report_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<OutcomeReport>();
}

} // namespace

void to_json(nlohmann::json& j, const SubgroupReport& r) {
    j = {{"teen", optional_report(r.teen)},
         {"non_teen", optional_report(r.non_teen)},
         {"minority", optional_report(r.minority)},
         {"non_minority", optional_report(r.non_minority)}};
}

void from_json(const nlohmann::json& j, SubgroupReport& r) {
    r.teen = optional_report_from(j.at("teen"));
    r.non_teen = optional_report_from(j.at("non_teen"));
    r.minority = optional_report_from(j.at("minority"));
    r.non_minority = optional_report_from(j.at("non_minority"));
}

void to_json(nlohmann::json& j, const AggregateReport& r) {
    j = nlohmann::json::object();
    j["runs"] = r.runs;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        const auto& s = r.metrics[m];
        j[std::string(kMetricNames[m])] =
            s ? nlohmann::json{{"mean", s->mean}, {"ci95_half_width", s->half_width}, {"n", s->n}}
              : nlohmann::json(nullptr);
    }
}

void to_json(nlohmann::json& j, const HistogramComparison& r) {
    j = {{"shares", r.shares},
         {"reference", r.reference},
         {"max_abs_deviation", r.max_abs_deviation},
         {"correlation", r.correlation ? nlohmann::json(*r.correlation) : nlohmann::json(nullptr)},
         {"within_tolerance", r.within_tolerance}};
}

// ---------------------------------------------------------------- records

void to_json(nlohmann::json& j, const MatchRecord& r) {
    j = {{"seeker_id", r.seeker_id},         {"counselor_id", r.counselor_id},
         {"match_minute", r.match_minute},   {"wait_min", r.wait_min},
         {"chat_len_min", r.chat_len_min},   {"rating_pred", r.rating_pred},
         {"block_pred", r.block_pred},       {"oracle_rating", r.oracle_rating},
         {"oracle_block", r.oracle_block},   {"teen", r.teen},
         {"minority", r.minority}};
}

void from_json(const nlohmann::json& j, MatchRecord& r) {
    j.at("seeker_id").get_to(r.seeker_id);
    j.at("counselor_id").get_to(r.counselor_id);
    j.at("match_minute").get_to(r.match_minute);
    j.at("wait_min").get_to(r.wait_min);
    j.at("chat_len_min").get_to(r.chat_len_min);
    j.at("rating_pred").get_to(r.rating_pred);
    j.at("block_pred").get_to(r.block_pred);
    j.at("oracle_rating").get_to(r.oracle_rating);
    j.at("oracle_block").get_to(r.oracle_block);
    j.at("teen").get_to(r.teen);
    j.at("minority").get_to(r.minority);
}

void to_json(nlohmann::json& j, const AbandonRecord& r) {
    j = {{"seeker_id", r.seeker_id},
         {"abandon_minute", r.abandon_minute},
         {"wait_min", r.wait_min},
         {"teen", r.teen},
         {"minority", r.minority}};
}

void from_json(const nlohmann::json& j, AbandonRecord& r) {
    j.at("seeker_id").get_to(r.seeker_id);
    j.at("abandon_minute").get_to(r.abandon_minute);
    j.at("wait_min").get_to(r.wait_min);
    j.at("teen").get_to(r.teen);
    j.at("minority").get_to(r.minority);
}

} // namespace matchlab
