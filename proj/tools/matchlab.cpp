// matchlab command line: calibrate, train, simulate, compare, validate, serve.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "matchlab/engine.hpp"
#include "matchlab/experiment.hpp"
#include "matchlab/oracle.hpp"
#include "matchlab/service.hpp"
#include "matchlab/validation.hpp"

using namespace matchlab;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> horizon;
    std::optional<std::string> policy;
    std::optional<std::string> out;
    std::optional<std::string> records;
};

// Config file (or defaults) with the global flags applied on top.
RunConfig resolve_config(const Globals& g) {
    RunConfig c = g.config.empty() ? RunConfig{} : load_run_config(g.config);
    std::vector<FieldError> errors;
    if (g.seed) c.seed = *g.seed;
    if (g.horizon) c.horizon_min = *g.horizon;
    if (g.policy) {
        try {
            c.policy = policy_from_string(*g.policy);
        } catch (const std::invalid_argument& e) {
            errors.push_back({"--policy", e.what()});
        }
    }
    if (g.records) {
        try {
            c.records = records_mode_from_string(*g.records);
        } catch (const std::invalid_argument& e) {
            errors.push_back({"--records", e.what()});
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    c.validate();
    return c;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path);
}

std::string percent(double x) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << 100.0 * x << '%';
    return s.str();
}

int cmd_calibrate(const Globals& g, const std::string& start) {
    const RunConfig c = resolve_config(g);
    OracleParams from;
    if (!start.empty()) {
        std::ifstream in(start);
        if (!in) throw std::runtime_error("cannot open oracle file " + start);
        from = nlohmann::json::parse(in).get<OracleParams>();
    }
    const CalibrationResult r = calibrate(from, AgentFactory(c.population), CalibrationTargets{});
    write_json(r.params, g.out.value_or("oracle.json"));
    std::cerr << "rating shares:";
    for (double s : r.achieved_rating) std::cerr << ' ' << percent(s);
    std::cerr << "\nblock share: " << percent(r.achieved_block) << '\n';
    return 0;
}

int cmd_train(const Globals& g) {
    RunConfig c = resolve_config(g);
    std::optional<OracleParams> start;
    if (!c.predictors.oracle.empty()) {
        std::ifstream in(c.predictors.oracle);
        if (!in) throw std::runtime_error("cannot open oracle file " + c.predictors.oracle);
        start = nlohmann::json::parse(in).get<OracleParams>();
    }
    const std::filesystem::path dir = g.out.value_or("models");
    std::filesystem::create_directories(dir);
    const FreshTraining t = train_fresh_bundle(c.population, c.predictors, start ? &*start : nullptr);
    save_model(t.bundle->rating, (dir / "rating_model.json").string());
    save_model(t.bundle->block, (dir / "block_model.json").string());
    write_json(t.bundle->oracle, (dir / "oracle.json").string());
    const nlohmann::json eval = {
        {"rating", eval_to_json(t.trained.rating_eval)},
        {"block", eval_to_json(t.trained.block_eval)},
        {"rating_majority_baseline", t.trained.rating_majority_baseline},
        {"block_majority_baseline", t.trained.block_majority_baseline},
        {"rating_counts_before_smote", t.trained.rating_counts_before},
        {"rating_counts_after_smote", t.trained.rating_counts_after},
        {"block_counts_before_smote", t.trained.block_counts_before},
        {"block_counts_after_smote", t.trained.block_counts_after},
        {"predictors", t.bundle->fingerprint}};
    write_json(eval, (dir / "eval.json").string());
    std::cerr << "rating accuracy " << percent(t.trained.rating_eval.accuracy) << " (baseline "
              << percent(t.trained.rating_majority_baseline) << "), block accuracy "
              << percent(t.trained.block_eval.accuracy) << "; models in " << dir.string() << '\n';
    return 0;
}

int cmd_simulate(const Globals& g) {
    const RunConfig c = resolve_config(g);
    const RunResult r = run(c);
    const std::string path = g.out ? *g.out : c.output_path;
    if (path.empty() || path == "-") {
        std::cout << result_to_json(r).dump(2) << '\n';
    } else {
        write_result(r, path);
    }
    if (!r.counts.holds()) {
        std::cerr << "seeker conservation identity violated\n";
        return 4;
    }
    return 0;
}

std::vector<Policy> parse_policies(const std::string& list) {
    if (list == "all") return {kAllPolicies.begin(), kAllPolicies.end()};
    std::vector<Policy> out;
    std::stringstream in(list);
    for (std::string name; std::getline(in, name, ',');) {
        try {
            out.push_back(policy_from_string(name));
        } catch (const std::invalid_argument& e) {
            throw ConfigError({FieldError{"--policies", e.what()}});
        }
    }
    return out;
}

int cmd_compare(const Globals& g, const std::string& policies, int seeds, const std::string& baseline,
                unsigned threads) {
    ExperimentSpec spec;
    spec.base = resolve_config(g);
    spec.policies = parse_policies(policies);
    for (int i = 0; i < seeds; ++i) spec.seeds.push_back(spec.base.seed + static_cast<std::uint64_t>(i));
    try {
        spec.baseline = policy_from_string(baseline);
    } catch (const std::invalid_argument& e) {
        throw ConfigError({FieldError{"--baseline", e.what()}});
    }
    spec.output_dir = g.out.value_or("comparison");
    ExperimentHooks hooks;
    hooks.threads = threads;
    hooks.progress = [](std::size_t done, std::size_t total) {
        std::cerr << "\r" << done << "/" << total << " runs" << (done == total ? "\n" : "") << std::flush;
    };
    const ExperimentResult r = run_experiment(spec, hooks);
    std::cout << comparison_table(r);
    std::cerr << "results in " << spec.output_dir << '\n';
    return 0;
}

int cmd_validate(const Globals& g, int seeds, unsigned threads) {
    RunConfig c = resolve_config(g);
    std::vector<std::uint64_t> list;
    for (int i = 0; i < seeds; ++i) list.push_back(c.seed + static_cast<std::uint64_t>(i));
    const ValidationReport r = run_validation(c, list, nullptr, threads);
    write_json(r, g.out.value_or("validation.json"));
    for (const auto& check : r.checks) {
        std::cerr << (check.passed ? "PASS " : "FAIL ") << check.name << ": " << check.observed.dump()
                  << " vs " << check.expected.dump() << " (" << check.criterion << ")\n";
    }
    return r.passed() ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"matchlab: peer-support matching market simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "run config JSON")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "run seed");
    app.add_option("--horizon", g.horizon, "measured minutes after warm-up");
    app.add_option("--policy", g.policy, "matching policy");
    app.add_option("--out", g.out, "output file or directory");
    app.add_option("--records", g.records, "summary or full");

    auto* calibrate_cmd = app.add_subcommand("calibrate", "fit the outcome oracle to the target marginals");
    std::string oracle_start;
    calibrate_cmd->add_option("--from", oracle_start, "starting oracle parameters");

    auto* train_cmd = app.add_subcommand("train", "calibrate, draw a corpus and fit both outcome forests");
    auto* simulate_cmd = app.add_subcommand("simulate", "run one simulation and write its result");

    auto* compare_cmd = app.add_subcommand("compare", "run a policy x seed grid");
    std::string policies = "all";
    int compare_seeds = 5;
    std::string baseline = "replication";
    unsigned threads = 1;
    compare_cmd->add_option("--policies", policies, "comma-separated policy names or 'all'");
    compare_cmd->add_option("--seeds", compare_seeds, "seeds per policy, counting up from --seed")
        ->check(CLI::Range(1, 1000));
    compare_cmd->add_option("--baseline", baseline, "policy the deltas are taken against");
    compare_cmd->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 256u));

    auto* validate_cmd = app.add_subcommand("validate", "check the replication baseline against platform figures");
    int validate_seeds = 5;
    validate_cmd->add_option("--seeds", validate_seeds, "seeds, counting up from --seed")->check(CLI::Range(1, 1000));
    validate_cmd->add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 256u));

    auto* serve_cmd = app.add_subcommand("serve", "serve the /v1 HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    ServiceOptions service;
    serve_cmd->add_option("--host", host, "listen address");
    serve_cmd->add_option("--port", port, "listen port")->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--workers", service.workers, "concurrent experiments (default cores - 1)");
    serve_cmd->add_option("--capacity", service.capacity, "queued + running experiments before 429");
    serve_cmd->add_option("--data-dir", service.data_dir, "artifact root (default $MATCHLAB_DATA_DIR or ./matchlab-data)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*calibrate_cmd) return cmd_calibrate(g, oracle_start);
        if (*train_cmd) return cmd_train(g);
        if (*simulate_cmd) return cmd_simulate(g);
        if (*compare_cmd) return cmd_compare(g, policies, compare_seeds, baseline, threads);
        if (*validate_cmd) return cmd_validate(g, validate_seeds, threads);
        if (*serve_cmd) return serve(host, port, service);
    } catch (const ConfigError& e) {
        std::cerr << "matchlab: invalid configuration\n";
        for (const auto& f : e.errors()) std::cerr << "  " << (f.field.empty() ? "(root)" : f.field) << ": " << f.message << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "matchlab: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
