#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/config.hpp"
#include "matchlab/matching.hpp"
#include "matchlab/metrics.hpp"
#include "matchlab/oracle.hpp"
#include "matchlab/population.hpp"
#include "matchlab/predictors.hpp"
#include "matchlab/records.hpp"

namespace matchlab {

/// Oracle and outcome models shared read-only by any number of runs.
struct PredictorBundle {
    OracleParams oracle;
    OutcomeModel rating;
    OutcomeModel block;
    std::string fingerprint;  // identifies the source so grids can check pairing
};

/// Loads or trains the predictors a config asks for. Fresh training is
/// memoised per process on (population, training seed, corpus size, trees).
/// Throws std::runtime_error naming any missing file.
std::shared_ptr<const PredictorBundle> prepare_predictors(const RunConfig& config);

/// Trains a bundle from scratch: calibrate the oracle, draw the corpus, fit both forests.
struct FreshTraining {
    std::shared_ptr<const PredictorBundle> bundle;
    CalibrationResult calibration;
    TrainedPredictors trained;
};
FreshTraining train_fresh_bundle(const PopulationParams& population, const PredictorSource& source,
                                 const OracleParams* oracle_start = nullptr);

/// Counts that must reconcile: every seeker generated so far is matched,
/// abandoned or still waiting.
struct Conservation {
    long seekers_generated = 0;
    long seekers_matched = 0;
    long seekers_abandoned = 0;
    long seekers_waiting = 0;
    long counselors_generated = 0;

    bool holds() const {
        return seekers_generated == seekers_matched + seekers_abandoned + seekers_waiting;
    }
    bool operator==(const Conservation&) const = default;
};

struct World {
    int minute = 0;
    std::vector<Agent> agents;                 // agents[id].id == id
    std::vector<AgentId> waiting_seekers;      // increasing id
    std::vector<AgentId> waiting_counselors;   // increasing id
    std::vector<ChatSession> sessions;
    Conservation counts;
};

struct StepRecords {
    std::vector<MatchRecord> matches;
    std::vector<AbandonRecord> abandons;
    std::vector<ChatSession> started;
};

/// One simulation. Each step runs, in order: session ends, arrivals,
/// abandonment, matching, record keeping.
class Engine {
public:
    Engine(const RunConfig& config, std::shared_ptr<const PredictorBundle> predictors);
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    StepRecords step();

    const World& world() const { return world_; }
    /// Test hook: turns top-up arrivals off so a world can be built by hand.
    void set_arrivals_enabled(bool enabled) { arrivals_enabled_ = enabled; }
    /// Test hook: adds an agent arriving now.
    AgentId add_agent(Agent agent);
    ScoreTable& scores() { return scores_; }

private:
    void end_sessions(int minute);
    void arrive(int minute);
    void abandon(int minute, StepRecords& out);
    void match(int minute, StepRecords& out);
    void start_chat(AgentId seeker, AgentId counselor, int minute, StepRecords& out);
    PairScore score(const Agent& seeker, const Agent& counselor) const;
    void prescore(const RoundState& round);

    RunConfig config_;
    std::shared_ptr<const PredictorBundle> predictors_;
    AgentFactory factory_;
    FeatureScaling similarity_scaling_;
    World world_;
    IdSource ids_;
    DecisionClock clock_;
    ScoreTable scores_;
    bool arrivals_enabled_ = true;

    Rng target_rng_;
    Rng seeker_attr_rng_;
    Rng counselor_attr_rng_;
    Rng patience_rng_;
    Rng chat_rng_;
    Rng matching_rng_;
    Rng noise_rng_;
    DiscretizedDistribution chat_len_;
};

struct RunResult {
    RunConfig config;
    std::vector<MatchRecord> matches;      // events at or after warm-up
    std::vector<AbandonRecord> abandons;
    OutcomeReport predicted;               // predictor-scored outcomes
    OutcomeReport oracle;                  // oracle-labelled outcomes
    SubgroupReport subgroups;              // predictor-scored
    std::array<double, 5> oracle_rating_shares{};
    std::optional<double> oracle_block_share;
    Conservation counts;
    std::string predictor_fingerprint;
};

/// Thrown by run() when its stop flag is raised.
class RunCancelled : public std::runtime_error {
public:
    RunCancelled() : std::runtime_error("run cancelled") {}
};

/// Sees the world after every measured minute.
using StepObserver = std::function<void(const World&)>;

/// Warm-up then `horizon_min` measured minutes. `stop` is polled once per minute.
RunResult run(const RunConfig& config);
RunResult run(const RunConfig& config, std::shared_ptr<const PredictorBundle> predictors,
              const std::atomic<bool>* stop = nullptr, const StepObserver& observe = {});

/// Config echo, summaries and, in full mode, the record arrays.
nlohmann::json result_to_json(const RunResult& result);
/// Writes result_to_json with stable formatting.
void write_result(const RunResult& result, const std::string& path);

} // namespace matchlab
