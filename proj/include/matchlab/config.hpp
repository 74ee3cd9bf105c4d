#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/core.hpp"
#include "matchlab/population.hpp"

namespace matchlab {

/// Where a run gets its outcome models and oracle from.
struct PredictorSource {
    bool train_fresh = true;
    std::string rating_model;     // model JSON paths, used when train_fresh is false
    std::string block_model;
    std::string oracle;           // OracleParams JSON; empty means calibrate defaults
    std::uint64_t training_seed = 7;
    std::size_t corpus_size = 23587;
    int n_trees = 100;

    bool operator==(const PredictorSource&) const = default;
};

enum class RecordsMode { Summary, Full };
std::string_view to_string(RecordsMode m);
RecordsMode records_mode_from_string(std::string_view s);

struct RunConfig {
    std::uint64_t seed = 42;
    int horizon_min = 10080;
    int warmup_min = 60;
    Policy policy = Policy::Replication;
    double recommendation_accept_prob = 0.9;
    std::size_t list_limit = 50;
    PopulationParams population;
    PredictorSource predictors;
    std::string output_path;
    RecordsMode records = RecordsMode::Summary;

    /// Throws ConfigError listing every offending field.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

struct FieldError {
    std::string field;
    std::string message;
};

/// A configuration problem tied to named fields.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<FieldError> errors);
    const std::vector<FieldError>& errors() const { return errors_; }

private:
    std::vector<FieldError> errors_;
};

void to_json(nlohmann::json& j, const PopulationParams& p);
/// Missing keys keep their defaults; wrong types and unknown keys are errors.
void from_json(const nlohmann::json& j, PopulationParams& p);
void to_json(nlohmann::json& j, const PredictorSource& p);
void from_json(const nlohmann::json& j, PredictorSource& p);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses and validates; every problem is reported at once as a ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

} // namespace matchlab
