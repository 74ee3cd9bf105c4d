#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/engine.hpp"

namespace matchlab {

/// One comparison of a replication run against the platform figures.
struct ValidationCheck {
    std::string name;
    bool passed = false;
    nlohmann::json observed;
    nlohmann::json expected;
    std::string criterion;
};

struct ValidationReport {
    std::vector<std::uint64_t> seeds;
    std::vector<ValidationCheck> checks;
    double seconds = 0.0;

    bool passed() const;
    const ValidationCheck& check(const std::string& name) const;
};

/// Per-seed statistics of one replication run.
struct ReplicationStats {
    std::uint64_t seed = 0;
    RunResult result;
    double online_seekers_mean = 0.0;
    double online_counselors_mean = 0.0;
    std::vector<int> online_seekers;     // one sample per measured minute
    std::vector<int> online_counselors;
};

/// Runs `base` under the replication policy, also sampling online counts
/// (waiting + chatting) after every measured minute.
ReplicationStats replication_run(const RunConfig& base, std::shared_ptr<const PredictorBundle> predictors);

/// Averages replication runs over `seeds` and checks, in order: online user
/// counts, oracle rating marginals, oracle block marginal, matched-seeker
/// wait, matching rate.
ValidationReport run_validation(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                std::shared_ptr<const PredictorBundle> predictors = nullptr,
                                unsigned threads = 1);

void to_json(nlohmann::json& j, const ValidationCheck& c);
void to_json(nlohmann::json& j, const ValidationReport& r);

} // namespace matchlab
