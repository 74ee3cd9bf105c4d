#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/config.hpp"
#include "matchlab/engine.hpp"
#include "matchlab/metrics.hpp"

namespace matchlab {

/// A policy x seed grid over one base config. Every cell shares the base
/// population and predictor source, so policies are compared on paired seeds.
struct ExperimentSpec {
    RunConfig base;
    std::vector<Policy> policies;
    std::vector<std::uint64_t> seeds;
    Policy baseline = Policy::Replication;
    std::string output_dir;  // empty: keep results in memory only

    /// Throws ConfigError listing every offending field.
    void validate() const;
    /// One RunConfig per cell, policy-major.
    std::vector<RunConfig> expand() const;
};

/// Accepts {"base": RunConfig, "policies": [...] | "all", "seeds": [...] or
/// "replications": n (seeds base.seed .. base.seed+n-1), "baseline", "output_dir"}.
/// Missing keys keep defaults; every problem is reported in one ConfigError.
ExperimentSpec parse_experiment_spec(const nlohmann::json& j);
nlohmann::json to_json_value(const ExperimentSpec& spec);

/// Per-cell outcome summaries kept after a run's records are dropped.
struct CellResult {
    Policy policy = Policy::Replication;
    std::uint64_t seed = 0;
    OutcomeReport predicted;
    OutcomeReport oracle;
    SubgroupReport subgroups;
    bool conservation_holds = true;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::string predictor_fingerprint;
    std::vector<CellResult> cells;  // same order as spec.expand()
};

struct ExperimentHooks {
    /// Called after each finished cell with (done, total); may be called from workers.
    std::function<void(std::size_t, std::size_t)> progress;
    const std::atomic<bool>* cancel = nullptr;
    unsigned threads = 1;
    /// Use these instead of preparing predictors from spec.base.
    std::shared_ptr<const PredictorBundle> predictors;
};

/// Runs every cell, writing files into spec.output_dir when it is set:
/// comparison.json, subgroups.json, table.txt and runs/<policy>-<seed>.json.
/// Throws RunCancelled if cancelled, or the first cell's error.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentHooks& hooks = {});

/// One row per policy, each metric with mean, 95% half width,
/// rank and best/worst badge, plus oracle-label summaries.
nlohmann::json comparison_json(const ExperimentResult& result);
/// The same rows for each of the four seeker subgroups.
nlohmann::json subgroups_json(const ExperimentResult& result);
std::string comparison_table(const ExperimentResult& result);

/// Ranks rows of one metric column: 1 is best. Rows without a value get no
/// rank; equal values keep row order. Returns rank per row (0 = unranked).
std::vector<int> rank_column(const std::vector<std::optional<double>>& values, bool higher_is_better);

} // namespace matchlab
