#include "matchlab/validation.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "matchlab/oracle.hpp"

namespace matchlab {

namespace {

// Platform figures the replication baseline is held to.
constexpr double kWaitTarget = 3.2;
constexpr double kWaitTolerance = 0.3;
constexpr double kMatchRateTarget = 0.7835;
constexpr double kMatchRateTolerance = 0.03;
constexpr double kRatingTolerance = 0.02;
constexpr double kBlockTolerance = 0.015;
constexpr double kOnlineRelativeTolerance = 0.10;

double mean_of(const std::vector<int>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (int x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

bool ValidationReport::passed() const {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return !checks.empty();
}

const ValidationCheck& ValidationReport::check(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return c;
    }
    throw std::out_of_range("no validation check named " + name);
}

ReplicationStats replication_run(const RunConfig& base, std::shared_ptr<const PredictorBundle> predictors) {
    RunConfig c = base;
    c.policy = Policy::Replication;
    ReplicationStats s;
    s.seed = c.seed;
    s.online_seekers.reserve(static_cast<std::size_t>(std::max(0, c.horizon_min)));
    s.online_counselors.reserve(static_cast<std::size_t>(std::max(0, c.horizon_min)));
    s.result = run(c, std::move(predictors), nullptr, [&](const World& w) {
        const int chatting = static_cast<int>(w.sessions.size());
        s.online_seekers.push_back(static_cast<int>(w.waiting_seekers.size()) + chatting);
        s.online_counselors.push_back(static_cast<int>(w.waiting_counselors.size()) + chatting);
    });
    s.online_seekers_mean = mean_of(s.online_seekers);
    s.online_counselors_mean = mean_of(s.online_counselors);
    return s;
}

ValidationReport run_validation(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                std::shared_ptr<const PredictorBundle> predictors, unsigned threads) {
    if (seeds.empty()) throw std::invalid_argument("run_validation: no seeds");
    const auto t0 = std::chrono::steady_clock::now();
    if (!predictors) predictors = prepare_predictors(base);

    std::vector<ReplicationStats> runs(seeds.size());
    {
        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        std::exception_ptr error;
        auto worker = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < seeds.size();) {
                try {
                    RunConfig c = base;
                    c.seed = seeds[i];
                    runs[i] = replication_run(c, predictors);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        };
        const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
        std::vector<std::thread> pool;
        for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        if (error) std::rethrow_exception(error);
    }

    // Means over seeds.
    const double k = static_cast<double>(runs.size());
    std::array<double, 5> rating{};
    double block = 0.0, wait = 0.0, rate = 0.0, seekers = 0.0, counselors = 0.0;
    for (const auto& r : runs) {
        for (std::size_t i = 0; i < 5; ++i) rating[i] += r.result.oracle_rating_shares[i] / k;
        block += r.result.oracle_block_share.value_or(0.0) / k;
        wait += r.result.predicted.avg_wait_matched_min.value_or(0.0) / k;
        rate += r.result.predicted.matching_rate.value_or(0.0) / k;
        seekers += r.online_seekers_mean / k;
        counselors += r.online_counselors_mean / k;
    }

    ValidationReport report;
    report.seeds = seeds;
    const auto& pop = base.population;

    {
        ValidationCheck c;
        c.name = "online_users";
        const double ds = std::abs(seekers - pop.seeker_online_mean) / pop.seeker_online_mean;
        const double dc = std::abs(counselors - pop.counselor_online_mean) / pop.counselor_online_mean;
        c.passed = ds <= kOnlineRelativeTolerance && dc <= kOnlineRelativeTolerance;
        c.observed = {{"seekers_mean", seekers}, {"counselors_mean", counselors}};
        c.expected = {{"seekers_mean", pop.seeker_online_mean}, {"counselors_mean", pop.counselor_online_mean}};
        c.criterion = "mean online count within 10% of the configured mean, per role";
        report.checks.push_back(c);
    }
    {
        ValidationCheck c;
        c.name = "rating_marginals";
        const std::vector<double> observed(rating.begin(), rating.end());
        const std::vector<double> expected(kTargetRatingShares.begin(), kTargetRatingShares.end());
        double dev = 0.0;
        for (std::size_t i = 0; i < 5; ++i) dev = std::max(dev, std::abs(observed[i] - expected[i]));
        c.passed = dev <= kRatingTolerance + 1e-12;
        c.observed = {{"shares", observed}, {"max_abs_deviation", dev}, {"pearson", pearson(observed, expected)}};
        c.expected = {{"shares", expected}};
        c.criterion = "every rating share within 2pp";
        report.checks.push_back(c);
    }
    {
        ValidationCheck c;
        c.name = "block_marginal";
        const double dev = std::abs(block - kTargetBlockShare);
        c.passed = dev <= kBlockTolerance + 1e-12;
        c.observed = {{"share", block}, {"abs_deviation", dev}};
        c.expected = {{"share", kTargetBlockShare}};
        c.criterion = "blocked share within 1.5pp";
        report.checks.push_back(c);
    }
    {
        ValidationCheck c;
        c.name = "wait_matched";
        c.passed = std::abs(wait - kWaitTarget) <= kWaitTolerance + 1e-12;
        c.observed = {{"mean_min", wait}};
        c.expected = {{"mean_min", kWaitTarget}};
        c.criterion = "matched-seeker mean wait within 0.3 min";
        report.checks.push_back(c);
    }
    {
        ValidationCheck c;
        c.name = "matching_rate";
        c.passed = std::abs(rate - kMatchRateTarget) <= kMatchRateTolerance + 1e-12;
        c.observed = {{"rate", rate}};
        c.expected = {{"rate", kMatchRateTarget}};
        c.criterion = "matching rate within 3pp";
        report.checks.push_back(c);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void to_json(nlohmann::json& j, const ValidationCheck& c) {
    j = {{"name", c.name},
         {"passed", c.passed},
         {"observed", c.observed},
         {"expected", c.expected},
         {"criterion", c.criterion}};
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
    j = {{"format", "matchlab.validation"},
         {"version", 1},
         {"seeds", r.seeds},
         {"passed", r.passed()},
         {"checks", r.checks}};
}

} // namespace matchlab
