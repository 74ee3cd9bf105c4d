#include "matchlab/experiment.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace matchlab {

namespace {

constexpr std::size_t kMaxCells = 1000;

bool non_negative_integer(const nlohmann::json& v) {
    return v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string cell_file_name(Policy p, std::uint64_t seed) {
    return std::string(to_string(p)) + "-" + std::to_string(seed) + ".json";
}

} // namespace

void ExperimentSpec::validate() const {
    std::vector<FieldError> errors;
    try {
        base.validate();
    } catch (const ConfigError& e) {
        for (const auto& f : e.errors()) errors.push_back({"base." + f.field, f.message});
    }
    if (base.horizon_min < 1) errors.push_back({"base.horizon_min", "must be >= 1 for an experiment"});
    if (policies.empty()) errors.push_back({"policies", "at least one policy is required"});
    if (std::set<Policy>(policies.begin(), policies.end()).size() != policies.size()) {
        errors.push_back({"policies", "duplicate policy"});
    }
    if (seeds.empty()) errors.push_back({"seeds", "at least one seed is required"});
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        errors.push_back({"seeds", "duplicate seed"});
    }
    if (policies.size() * seeds.size() > kMaxCells) {
        errors.push_back({"seeds", "grid exceeds " + std::to_string(kMaxCells) + " runs"});
    }
    if (!policies.empty() && std::find(policies.begin(), policies.end(), baseline) == policies.end()) {
        errors.push_back({"baseline", "must be one of the listed policies"});
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
}

std::vector<RunConfig> ExperimentSpec::expand() const {
    std::vector<RunConfig> cells;
    for (Policy p : policies) {
        for (std::uint64_t s : seeds) {
            RunConfig c = base;
            c.policy = p;
            c.seed = s;
            c.output_path.clear();
            cells.push_back(c);
        }
    }
    return cells;
}

ExperimentSpec parse_experiment_spec(const nlohmann::json& j) {
    ExperimentSpec spec;
    std::vector<FieldError> errors;
    if (!j.is_object()) throw ConfigError(std::vector<FieldError>{{"", "expected an object"}});

    for (const auto& [key, _] : j.items()) {
        static const std::set<std::string> known{"base", "policies", "seeds", "replications",
                                                 "baseline", "output_dir"};
        if (!known.count(key)) errors.push_back({key, "unknown field"});
    }

    if (j.contains("base")) {
        try {
            spec.base = j.at("base").get<RunConfig>();
        } catch (const ConfigError& e) {
            for (const auto& f : e.errors()) {
                errors.push_back({f.field.empty() ? "base" : "base." + f.field, f.message});
            }
        }
    }

    if (j.contains("policies")) {
        const auto& v = j.at("policies");
        if (v.is_string() && v.get<std::string>() == "all") {
            spec.policies.assign(kAllPolicies.begin(), kAllPolicies.end());
        } else if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string field = "policies[" + std::to_string(i) + "]";
                if (!v[i].is_string()) {
                    errors.push_back({field, "expected a policy name"});
                    continue;
                }
                try {
                    spec.policies.push_back(policy_from_string(v[i].get<std::string>()));
                } catch (const std::invalid_argument& e) {
                    errors.push_back({field, e.what()});
                }
            }
        } else {
            errors.push_back({"policies", "expected an array of policy names or \"all\""});
        }
    } else {
        spec.policies.assign(kAllPolicies.begin(), kAllPolicies.end());
    }

    const bool has_seeds = j.contains("seeds");
    const bool has_reps = j.contains("replications");
    if (has_seeds && has_reps) errors.push_back({"replications", "give either seeds or replications"});
    if (has_seeds) {
        const auto& v = j.at("seeds");
        if (!v.is_array()) {
            errors.push_back({"seeds", "expected an array of non-negative integers"});
        } else {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!non_negative_integer(v[i])) {
                    errors.push_back({"seeds[" + std::to_string(i) + "]", "expected a non-negative integer"});
                } else {
                    spec.seeds.push_back(v[i].get<std::uint64_t>());
                }
            }
        }
    } else {
        std::uint64_t reps = 1;
        if (has_reps) {
            const auto& v = j.at("replications");
            if (!non_negative_integer(v) || v.get<std::uint64_t>() < 1 ||
                v.get<std::uint64_t>() > kMaxCells) {
                errors.push_back({"replications", "expected an integer in [1, " + std::to_string(kMaxCells) + "]"});
                reps = 0;
            } else {
                reps = v.get<std::uint64_t>();
            }
        }
        for (std::uint64_t i = 0; i < reps; ++i) spec.seeds.push_back(spec.base.seed + i);
    }

    if (j.contains("baseline")) {
        const auto& v = j.at("baseline");
        if (!v.is_string()) {
            errors.push_back({"baseline", "expected a policy name"});
        } else {
            try {
                spec.baseline = policy_from_string(v.get<std::string>());
            } catch (const std::invalid_argument& e) {
                errors.push_back({"baseline", e.what()});
            }
        }
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) {
            errors.push_back({"output_dir", "expected a string"});
        } else {
            spec.output_dir = j.at("output_dir").get<std::string>();
        }
    }

    if (errors.empty()) {
        try {
            spec.validate();
        } catch (const ConfigError& e) {
            errors = e.errors();
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return spec;
}

nlohmann::json to_json_value(const ExperimentSpec& spec) {
    nlohmann::json policies = nlohmann::json::array();
    for (Policy p : spec.policies) policies.push_back(std::string(to_string(p)));
    return {{"base", spec.base},
            {"policies", policies},
            {"seeds", spec.seeds},
            {"baseline", std::string(to_string(spec.baseline))},
            {"output_dir", spec.output_dir}};
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentHooks& hooks) {
    spec.validate();
    const std::vector<RunConfig> cells = spec.expand();
    const auto predictors = hooks.predictors ? hooks.predictors : prepare_predictors(spec.base);

    std::filesystem::path dir;
    if (!spec.output_dir.empty()) {
        dir = spec.output_dir;
        std::filesystem::create_directories(dir / "runs");
    }

    ExperimentResult result;
    result.spec = spec;
    result.predictor_fingerprint = predictors->fingerprint;
    result.cells.resize(cells.size());

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto cancelled = [&] { return hooks.cancel && hooks.cancel->load(); };
    auto worker = [&] {
        for (;;) {
            if (failed.load() || cancelled()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                const RunResult r = run(cells[i], predictors, hooks.cancel);
                CellResult& c = result.cells[i];
                c.policy = cells[i].policy;
                c.seed = cells[i].seed;
                c.predicted = r.predicted;
                c.oracle = r.oracle;
                c.subgroups = r.subgroups;
                c.conservation_holds = r.counts.holds();
                if (!dir.empty()) write_result(r, (dir / "runs" / cell_file_name(c.policy, c.seed)).string());
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed = true;
                return;
            }
            const std::size_t n = ++done;
            if (hooks.progress) hooks.progress(n, cells.size());
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(hooks.threads, static_cast<unsigned>(cells.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) {
        try {
            std::rethrow_exception(first_error);
        } catch (const RunCancelled&) {
            throw;
        } catch (...) {
            if (cancelled()) throw RunCancelled();
            throw;
        }
    }
    if (cancelled()) throw RunCancelled();

    if (!dir.empty()) {
        write_text(dir / "comparison.json", comparison_json(result).dump(2) + "\n");
        write_text(dir / "subgroups.json", subgroups_json(result).dump(2) + "\n");
        write_text(dir / "table.txt", comparison_table(result));
    }
    return result;
}

std::vector<int> rank_column(const std::vector<std::optional<double>>& values, bool higher_is_better) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i]) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return higher_is_better ? *values[a] > *values[b] : *values[a] < *values[b];
    });
    std::vector<int> rank(values.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k) rank[order[k]] = static_cast<int>(k + 1);
    return rank;
}

namespace {

struct Row {
    Policy policy;
    AggregateReport agg;
};

// One JSON row per policy with rank, badge and difference from the baseline row.
nlohmann::json annotated_rows(const std::vector<Row>& rows, Policy baseline) {
    std::vector<std::vector<int>> ranks(kMetricCount);
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        std::vector<std::optional<double>> col;
        for (const auto& r : rows) {
            col.push_back(r.agg.metrics[m] ? std::optional<double>(r.agg.metrics[m]->mean) : std::nullopt);
        }
        ranks[m] = rank_column(col, kHigherIsBetter[m]);
    }
    const Row* base = nullptr;
    for (const auto& r : rows) {
        if (r.policy == baseline) base = &r;
    }

    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& r = rows[i];
        nlohmann::json metrics = nlohmann::json::object();
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const auto& s = r.agg.metrics[m];
            const std::string name(kMetricNames[m]);
            if (!s) {
                metrics[name] = nullptr;
                continue;
            }
            int ranked = 0;
            for (int k : ranks[m]) ranked += k > 0 ? 1 : 0;
            nlohmann::json badge = nullptr;
            if (ranked >= 2 && ranks[m][i] == 1) badge = "best";
            if (ranked >= 2 && ranks[m][i] == ranked) badge = "worst";
            nlohmann::json delta = nullptr;
            if (base && base->agg.metrics[m]) delta = s->mean - base->agg.metrics[m]->mean;
            metrics[name] = {{"mean", s->mean},      {"ci95_half_width", s->half_width},
                             {"n", s->n},            {"rank", ranks[m][i]},
                             {"badge", badge},       {"delta_vs_baseline", delta}};
        }
        out.push_back({{"policy", std::string(to_string(r.policy))}, {"runs", r.agg.runs}, {"metrics", metrics}});
    }
    return out;
}

template <class Pick>
std::vector<Row> rows_of(const ExperimentResult& result, Pick pick) {
    std::vector<Row> rows;
    for (Policy p : result.spec.policies) {
        std::vector<OutcomeReport> reports;
        for (const auto& c : result.cells) {
            if (c.policy != p) continue;
            if (auto r = pick(c)) reports.push_back(*r);
        }
        rows.push_back({p, aggregate(reports)});
    }
    return rows;
}

nlohmann::json metric_catalogue() {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        out.push_back({{"name", std::string(kMetricNames[m])},
                       {"label", std::string(kMetricLabels[m])},
                       {"higher_is_better", kHigherIsBetter[m]}});
    }
    return out;
}

using SubgroupField = std::optional<OutcomeReport> SubgroupReport::*;
constexpr std::pair<const char*, SubgroupField> kGroups[] = {
    {"teen", &SubgroupReport::teen},
    {"non_teen", &SubgroupReport::non_teen},
    {"minority", &SubgroupReport::minority},
    {"non_minority", &SubgroupReport::non_minority},
};

} // namespace

nlohmann::json comparison_json(const ExperimentResult& result) {
    const auto predicted = rows_of(result, [](const CellResult& c) { return std::optional(c.predicted); });
    const auto oracle = rows_of(result, [](const CellResult& c) { return std::optional(c.oracle); });
    nlohmann::json rows = annotated_rows(predicted, result.spec.baseline);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i]["oracle"] = oracle[i].agg;
        nlohmann::json per_seed = nlohmann::json::array();
        bool holds = true;
        for (const auto& c : result.cells) {
            if (c.policy != predicted[i].policy) continue;
            per_seed.push_back({{"seed", c.seed}, {"predicted", c.predicted}, {"oracle", c.oracle}});
            holds = holds && c.conservation_holds;
        }
        rows[i]["per_seed"] = per_seed;
        rows[i]["conservation_holds"] = holds;
    }
    return {{"format", "matchlab.comparison"},
            {"version", 1},
            {"spec", to_json_value(result.spec)},
            {"predictors", result.predictor_fingerprint},
            {"baseline", std::string(to_string(result.spec.baseline))},
            {"metrics", metric_catalogue()},
            {"rows", rows}};
}

nlohmann::json subgroups_json(const ExperimentResult& result) {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [name, field] : kGroups) {
        const auto rows = rows_of(result, [field](const CellResult& c) { return c.subgroups.*field; });
        groups[name] = annotated_rows(rows, result.spec.baseline);
    }
    return {{"format", "matchlab.subgroups"},
            {"version", 1},
            {"predictors", result.predictor_fingerprint},
            {"baseline", std::string(to_string(result.spec.baseline))},
            {"metrics", metric_catalogue()},
            {"groups", groups}};
}

std::string comparison_table(const ExperimentResult& result) {
    auto table = [&](auto pick) {
        std::vector<std::pair<std::string, AggregateReport>> labelled;
        for (auto& r : rows_of(result, pick)) labelled.emplace_back(std::string(to_string(r.policy)), r.agg);
        return format_table(labelled);
    };
    std::string out = "Overall (predicted outcomes, " + std::to_string(result.spec.seeds.size()) + " seeds)\n";
    out += table([](const CellResult& c) { return std::optional(c.predicted); });
    out += "\nOverall (oracle outcomes)\n";
    out += table([](const CellResult& c) { return std::optional(c.oracle); });
    for (const auto& [name, field] : kGroups) {
        out += "\n" + std::string(name) + "\n";
        out += table([field](const CellResult& c) { return c.subgroups.*field; });
    }
    return out;
}

} // namespace matchlab
