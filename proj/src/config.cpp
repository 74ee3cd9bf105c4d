#include "matchlab/config.hpp"

#include <array>
#include <fstream>
#include <set>

namespace matchlab {

std::string_view to_string(RecordsMode m) {
    return m == RecordsMode::Full ? "full" : "summary";
}

RecordsMode records_mode_from_string(std::string_view s) {
    if (s == "full") return RecordsMode::Full;
    if (s == "summary") return RecordsMode::Summary;
    throw std::invalid_argument("records mode must be 'full' or 'summary', got '" +
                                std::string(s) + "'");
}

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
    std::string out;
    for (const auto& e : errors) {
        if (!out.empty()) out += "; ";
        out += e.field + ": " + e.message;
    }
    return out;
}

// Reads optional keys of one JSON object, collecting type errors by field path.
class Reader {
public:
    Reader(const nlohmann::json& j, std::string prefix, std::vector<FieldError>& errors)
        : j_(j), prefix_(std::move(prefix)), errors_(errors) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.is_object() && j_.contains(key);
    }

    const nlohmann::json& at(const char* key) const { return j_.at(key); }

    void read(const char* key, int& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) return fail(key, "expected an integer");
        out = v.get<int>();
    }
    void read(const char* key, std::uint64_t& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            return fail(key, "expected a non-negative integer");
        }
        out = v.get<std::uint64_t>();
    }
    void read_size(const char* key, std::size_t& out) {
        std::uint64_t v = out;
        read(key, v);
        out = static_cast<std::size_t>(v);
    }
    void read(const char* key, double& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number()) return fail(key, "expected a number");
        out = v.get<double>();
    }
    void read(const char* key, bool& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) return fail(key, "expected true or false");
        out = v.get<bool>();
    }
    void read(const char* key, std::string& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) return fail(key, "expected a string");
        out = v.get<std::string>();
    }
    template <std::size_t N>
    void read(const char* key, std::array<double, N>& out) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != N) {
            return fail(key, "expected an array of " + std::to_string(N) + " numbers");
        }
        for (std::size_t i = 0; i < N; ++i) {
            if (!v[i].is_number()) return fail(key, "expected an array of " + std::to_string(N) + " numbers");
        }
        for (std::size_t i = 0; i < N; ++i) out[i] = v[i].get<double>();
    }
    template <class Parse>
    void read_enum(const char* key, Parse parse) {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) return fail(key, "expected a string");
        try {
            parse(v.get<std::string>());
        } catch (const std::invalid_argument& e) {
            fail(key, e.what());
        }
    }

    void fail(const std::string& key, const std::string& message) {
        errors_.push_back({key.empty() ? prefix_ : path(key), message});
    }

    std::string path(const std::string& key) const {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }

    /// Reports keys that no read asked for.
    void reject_unknown() {
        if (!j_.is_object()) return;
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) fail(key, "unknown field");
        }
    }

private:
    const nlohmann::json& j_;
    std::string prefix_;
    std::vector<FieldError>& errors_;
    std::set<std::string> seen_;
};

void read_population(const nlohmann::json& j, const std::string& prefix, PopulationParams& p,
                     std::vector<FieldError>& errors) {
    Reader r(j, prefix, errors);
    r.read("seeker_online_mean", p.seeker_online_mean);
    r.read("seeker_online_sd", p.seeker_online_sd);
    r.read("counselor_online_mean", p.counselor_online_mean);
    r.read("counselor_online_sd", p.counselor_online_sd);
    r.read("patience_mean_min", p.patience_mean_min);
    r.read("patience_sd_min", p.patience_sd_min);
    r.read("chat_len_mean_min", p.chat_len_mean_min);
    r.read("chat_len_sd_min", p.chat_len_sd_min);
    r.read("decision_rate_per_min", p.decision_rate_per_min);
    r.read("seeker_gender_weights", p.seeker_gender_weights);
    r.read("counselor_gender_weights", p.counselor_gender_weights);
    r.read("birth_year_min", p.birth_year_min);
    r.read("birth_year_max", p.birth_year_max);
    r.read("seeker_teen_fraction", p.seeker_teen_fraction);
    r.read("counselor_teen_fraction", p.counselor_teen_fraction);
    r.read("signup_day_min", p.signup_day_min);
    r.read("signup_day_max", p.signup_day_max);
    r.read("experience_weights", p.experience_weights);
    r.has("gender_order");  // informational, written by to_json
    r.reject_unknown();
}

void read_predictors(const nlohmann::json& j, const std::string& prefix, PredictorSource& p,
                     std::vector<FieldError>& errors) {
    Reader r(j, prefix, errors);
    r.read("train_fresh", p.train_fresh);
    r.read("rating_model", p.rating_model);
    r.read("block_model", p.block_model);
    r.read("oracle", p.oracle);
    r.read("training_seed", p.training_seed);
    r.read_size("corpus_size", p.corpus_size);
    r.read("n_trees", p.n_trees);
    r.reject_unknown();
}

void read_run_config(const nlohmann::json& j, RunConfig& c, std::vector<FieldError>& errors) {
    Reader r(j, "", errors);
    r.read("seed", c.seed);
    r.read("horizon_min", c.horizon_min);
    r.read("warmup_min", c.warmup_min);
    r.read_enum("policy", [&](const std::string& s) { c.policy = policy_from_string(s); });
    r.read("recommendation_accept_prob", c.recommendation_accept_prob);
    r.read_size("list_limit", c.list_limit);
    if (r.has("population")) read_population(r.at("population"), "population", c.population, errors);
    if (r.has("predictors")) read_predictors(r.at("predictors"), "predictors", c.predictors, errors);
    r.read("output_path", c.output_path);
    r.read_enum("records", [&](const std::string& s) { c.records = records_mode_from_string(s); });
    r.reject_unknown();
}

std::vector<FieldError> semantic_errors(const RunConfig& c) {
    std::vector<FieldError> errors;
    if (c.horizon_min < 0) errors.push_back({"horizon_min", "must be >= 0"});
    if (c.warmup_min < 0) errors.push_back({"warmup_min", "must be >= 0"});
    if (!(c.recommendation_accept_prob >= 0.0 && c.recommendation_accept_prob <= 1.0)) {
        errors.push_back({"recommendation_accept_prob", "must be in [0, 1]"});
    }
    if (c.list_limit < 1) errors.push_back({"list_limit", "must be >= 1"});
    try {
        c.population.validate();
    } catch (const std::invalid_argument& e) {
        errors.push_back({"population", e.what()});
    }
    const auto& p = c.predictors;
    if (!p.train_fresh) {
        if (p.rating_model.empty()) {
            errors.push_back({"predictors.rating_model", "required when train_fresh is false"});
        }
        if (p.block_model.empty()) {
            errors.push_back({"predictors.block_model", "required when train_fresh is false"});
        }
    }
    if (p.n_trees < 1) errors.push_back({"predictors.n_trees", "must be >= 1"});
    if (p.corpus_size < 10) errors.push_back({"predictors.corpus_size", "must be >= 10"});
    return errors;
}

} // namespace

ConfigError::ConfigError(std::vector<FieldError> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

void RunConfig::validate() const {
    auto errors = semantic_errors(*this);
    if (!errors.empty()) throw ConfigError(std::move(errors));
}

void to_json(nlohmann::json& j, const PopulationParams& p) {
    nlohmann::json order = nlohmann::json::array();
    for (Gender g : kAllGenders) order.push_back(std::string(to_string(g)));
    j = {{"seeker_online_mean", p.seeker_online_mean},
         {"seeker_online_sd", p.seeker_online_sd},
         {"counselor_online_mean", p.counselor_online_mean},
         {"counselor_online_sd", p.counselor_online_sd},
         {"patience_mean_min", p.patience_mean_min},
         {"patience_sd_min", p.patience_sd_min},
         {"chat_len_mean_min", p.chat_len_mean_min},
         {"chat_len_sd_min", p.chat_len_sd_min},
         {"decision_rate_per_min", p.decision_rate_per_min},
         {"gender_order", order},
         {"seeker_gender_weights", p.seeker_gender_weights},
         {"counselor_gender_weights", p.counselor_gender_weights},
         {"birth_year_min", p.birth_year_min},
         {"birth_year_max", p.birth_year_max},
         {"seeker_teen_fraction", p.seeker_teen_fraction},
         {"counselor_teen_fraction", p.counselor_teen_fraction},
         {"signup_day_min", p.signup_day_min},
         {"signup_day_max", p.signup_day_max},
         {"experience_weights", p.experience_weights}};
}

void from_json(const nlohmann::json& j, PopulationParams& p) {
    std::vector<FieldError> errors;
    PopulationParams tmp = p;
    read_population(j, "", tmp, errors);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    p = tmp;
}

void to_json(nlohmann::json& j, const PredictorSource& p) {
    j = {{"train_fresh", p.train_fresh},   {"rating_model", p.rating_model},
         {"block_model", p.block_model},   {"oracle", p.oracle},
         {"training_seed", p.training_seed}, {"corpus_size", p.corpus_size},
         {"n_trees", p.n_trees}};
}

void from_json(const nlohmann::json& j, PredictorSource& p) {
    std::vector<FieldError> errors;
    PredictorSource tmp = p;
    read_predictors(j, "", tmp, errors);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    p = tmp;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"seed", c.seed},
         {"horizon_min", c.horizon_min},
         {"warmup_min", c.warmup_min},
         {"policy", std::string(to_string(c.policy))},
         {"recommendation_accept_prob", c.recommendation_accept_prob},
         {"list_limit", c.list_limit},
         {"population", c.population},
         {"predictors", c.predictors},
         {"output_path", c.output_path},
         {"records", std::string(to_string(c.records))}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    std::vector<FieldError> errors;
    RunConfig tmp = c;
    read_run_config(j, tmp, errors);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    c = tmp;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    std::vector<FieldError> errors;
    RunConfig c;
    read_run_config(j, c, errors);
    if (errors.empty()) errors = semantic_errors(c);
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

} // namespace matchlab
