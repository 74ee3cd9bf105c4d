#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "matchlab/experiment.hpp"

using namespace matchlab;

namespace {

ExperimentSpec small_spec() {
    ExperimentSpec s;
    s.base.horizon_min = 120;
    s.base.predictors.corpus_size = 2000;
    s.base.predictors.n_trees = 5;
    s.policies = {Policy::Replication, Policy::Fcfs, Policy::Rating};
    s.seeds = {1, 2};
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

} // namespace

TEST_CASE("a grid expands policy-major over shared settings") {
    const ExperimentSpec s = small_spec();
    const auto cells = s.expand();
    REQUIRE(cells.size() == 6);
    CHECK(cells[0].policy == Policy::Replication);
    CHECK(cells[1].policy == Policy::Replication);
    CHECK(cells[1].seed == 2);
    CHECK(cells[2].policy == Policy::Fcfs);
    for (const auto& c : cells) {
        CHECK(c.population == s.base.population);
        CHECK(c.predictors == s.base.predictors);
        CHECK(c.horizon_min == 120);
    }
}

TEST_CASE("parsing experiment specs") {
    SUBCASE("defaults") {
        const ExperimentSpec s = parse_experiment_spec(nlohmann::json::object());
        CHECK(s.policies.size() == 7);
        CHECK(s.seeds == std::vector<std::uint64_t>{RunConfig{}.seed});
        CHECK(s.baseline == Policy::Replication);
    }
    SUBCASE("replications count up from the base seed") {
        const ExperimentSpec s = parse_experiment_spec(
            {{"base", {{"seed", 10}, {"horizon_min", 60}}}, {"policies", {"fcfs", "filter"}},
             {"replications", 3}, {"baseline", "fcfs"}});
        CHECK(s.seeds == std::vector<std::uint64_t>{10, 11, 12});
        CHECK(s.base.horizon_min == 60);
        CHECK(s.baseline == Policy::Fcfs);
        CHECK(parse_experiment_spec(to_json_value(s)).expand() == s.expand());
    }
    SUBCASE("field errors are collected") {
        try {
            parse_experiment_spec({{"base", {{"horizon_min", "x"}, {"bogus", 1}}},
                                   {"policies", {"fcfs", 3, "nope"}},
                                   {"seeds", {1, -2}},
                                   {"baseline", 4},
                                   {"extra", true}});
            FAIL("expected a ConfigError");
        } catch (const ConfigError& e) {
            std::vector<std::string> fields;
            for (const auto& f : e.errors()) fields.push_back(f.field);
            const std::vector<std::string> want{"extra",       "base.horizon_min", "base.bogus",
                                                "policies[1]", "policies[2]",      "seeds[1]",
                                                "baseline"};
            CHECK(fields == want);
        }
    }
    SUBCASE("semantic errors") {
        auto fields = [](const nlohmann::json& j) {
            std::vector<std::string> out;
            try {
                parse_experiment_spec(j);
            } catch (const ConfigError& e) {
                for (const auto& f : e.errors()) out.push_back(f.field);
            }
            return out;
        };
        CHECK(fields({{"base", {{"horizon_min", 0}}}}) == std::vector<std::string>{"base.horizon_min"});
        CHECK(fields({{"policies", nlohmann::json::array()}}) == std::vector<std::string>{"policies"});
        CHECK(fields({{"policies", {"fcfs", "fcfs"}}, {"baseline", "fcfs"}}) ==
              std::vector<std::string>{"policies"});
        CHECK(fields({{"seeds", {1, 1}}}) == std::vector<std::string>{"seeds"});
        CHECK(fields({{"policies", {"fcfs"}}}) == std::vector<std::string>{"baseline"});
        CHECK(fields({{"seeds", {1}}, {"replications", 2}}) == std::vector<std::string>{"replications"});
        CHECK(fields({{"replications", 0}}) == std::vector<std::string>{"replications"});
        CHECK(fields({{"base", {{"list_limit", 0}}}}) == std::vector<std::string>{"base.list_limit"});
        CHECK_THROWS_AS(parse_experiment_spec(nlohmann::json::array()), ConfigError);
    }
}

TEST_CASE("ranking a metric column") {
    using V = std::vector<std::optional<double>>;
    CHECK(rank_column(V{3.0, 1.0, 2.0}, true) == std::vector<int>{1, 3, 2});
    CHECK(rank_column(V{3.0, 1.0, 2.0}, false) == std::vector<int>{3, 1, 2});
    CHECK(rank_column(V{2.0, 2.0, 1.0}, true) == std::vector<int>{1, 2, 3});  // ties keep row order
    CHECK(rank_column(V{std::nullopt, 5.0}, true) == std::vector<int>{0, 1});
    CHECK(rank_column(V{}, true).empty());
}

TEST_CASE("running a small grid") {
    const auto dir = std::filesystem::temp_directory_path() / "matchlab_test_experiment";
    std::filesystem::remove_all(dir);
    ExperimentSpec spec = small_spec();
    spec.output_dir = dir.string();

    std::vector<std::size_t> seen;
    ExperimentHooks hooks;
    hooks.progress = [&](std::size_t done, std::size_t total) {
        CHECK(total == 6);
        seen.push_back(done);
    };
    const ExperimentResult r = run_experiment(spec, hooks);
    CHECK(seen == std::vector<std::size_t>{1, 2, 3, 4, 5, 6});
    REQUIRE(r.cells.size() == 6);
    for (const auto& c : r.cells) CHECK(c.conservation_holds);

    // each cell equals a standalone run of the same config
    const auto cells = spec.expand();
    const RunResult alone = run(cells[3]);
    CHECK(r.cells[3].predicted == alone.predicted);
    CHECK(r.cells[3].oracle == alone.oracle);

    const auto cmp = comparison_json(r);
    CHECK(cmp["format"] == "matchlab.comparison");
    REQUIRE(cmp["rows"].size() == 3);
    CHECK(cmp["metrics"].size() == kMetricCount);
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        const std::string name(kMetricNames[m]);
        int best = 0, worst = 0;
        for (const auto& row : cmp["rows"]) {
            if (row["metrics"][name].is_null()) continue;
            if (row["metrics"][name]["badge"] == "best") ++best;
            if (row["metrics"][name]["badge"] == "worst") ++worst;
        }
        CHECK(best == 1);
        CHECK(worst == 1);
    }
    const auto& base_row = cmp["rows"][0];
    CHECK(base_row["policy"] == "replication");
    CHECK(base_row["metrics"]["avg_rating"]["delta_vs_baseline"].get<double>() == 0.0);
    CHECK(base_row["per_seed"].size() == 2);
    CHECK(base_row["metrics"]["avg_rating"]["n"] == 2);

    const auto sub = subgroups_json(r);
    for (const char* g : {"teen", "non_teen", "minority", "non_minority"}) CHECK(sub["groups"][g].size() == 3);

    CHECK(std::filesystem::exists(dir / "comparison.json"));
    CHECK(std::filesystem::exists(dir / "subgroups.json"));
    CHECK(std::filesystem::exists(dir / "runs" / "rating-2.json"));
    CHECK(nlohmann::json::parse(slurp(dir / "comparison.json")) == cmp);
    const std::string table = slurp(dir / "table.txt");
    CHECK(table.find("replication") != std::string::npos);
    CHECK(table.find("minority") != std::string::npos);

    // worker count does not change any file
    ExperimentSpec again = spec;
    again.output_dir = (dir / "threaded").string();
    hooks.progress = nullptr;
    hooks.threads = 3;
    run_experiment(again, hooks);
    CHECK(slurp(dir / "threaded" / "runs" / "fcfs-1.json") == slurp(dir / "runs" / "fcfs-1.json"));
    auto strip = [](nlohmann::json j) {
        j["spec"].erase("output_dir");
        return j;
    };
    CHECK(strip(nlohmann::json::parse(slurp(dir / "threaded" / "comparison.json"))) == strip(cmp));
    CHECK(slurp(dir / "threaded" / "subgroups.json") == slurp(dir / "subgroups.json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("a single policy gets no badges") {
    ExperimentSpec spec = small_spec();
    spec.policies = {Policy::Replication};
    spec.seeds = {4};
    const auto cmp = comparison_json(run_experiment(spec));
    REQUIRE(cmp["rows"].size() == 1);
    for (const auto& [name, v] : cmp["rows"][0]["metrics"].items()) {
        if (!v.is_null()) CHECK(v["badge"].is_null());
    }
}

TEST_CASE("cancelling stops the grid") {
    std::atomic<bool> cancel{true};
    ExperimentHooks hooks;
    hooks.cancel = &cancel;
    CHECK_THROWS_AS(run_experiment(small_spec(), hooks), RunCancelled);

    cancel = false;
    std::size_t calls = 0;
    hooks.progress = [&](std::size_t, std::size_t) {
        ++calls;
        cancel = true;
    };
    CHECK_THROWS_AS(run_experiment(small_spec(), hooks), RunCancelled);
    CHECK(calls == 1);
}
