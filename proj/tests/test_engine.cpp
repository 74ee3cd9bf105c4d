#include "doctest.h"

#include <map>
#include <set>
#include <stdexcept>

#include "matchlab/engine.hpp"

using namespace matchlab;

namespace {

PredictorSource small_source() {
    PredictorSource src;
    src.corpus_size = 2000;
    src.n_trees = 5;
    return src;
}

std::shared_ptr<const PredictorBundle> small_bundle() {
    static const auto bundle = train_fresh_bundle(PopulationParams{}, small_source()).bundle;
    return bundle;
}

RunConfig small_config(Policy policy, int horizon, std::uint64_t seed = 3) {
    RunConfig c;
    c.policy = policy;
    c.horizon_min = horizon;
    c.seed = seed;
    c.predictors = small_source();
    c.records = RecordsMode::Full;
    return c;
}

Agent seeker(int patience) {
    Agent a;
    a.role = Role::Seeker;
    a.patience_min = patience;
    a.signup_day = 17000;
    return a;
}

Agent counselor() {
    Agent a;
    a.role = Role::Counselor;
    a.signup_day = 17000;
    return a;
}

} // namespace

TEST_CASE("an empty world without arrivals stays empty") {
    Engine e(small_config(Policy::Rating, 10), small_bundle());
    e.set_arrivals_enabled(false);
    for (int i = 0; i < 5; ++i) {
        const StepRecords r = e.step();
        CHECK(r.matches.empty());
        CHECK(r.abandons.empty());
        CHECK(r.started.empty());
    }
    CHECK(e.world().agents.empty());
    CHECK(e.world().minute == 5);
    CHECK(e.world().counts == Conservation{});
}

TEST_CASE("a seeker abandons once the wait exceeds patience") {
    Engine e(small_config(Policy::Fcfs, 10), small_bundle());
    e.set_arrivals_enabled(false);
    const AgentId id = e.add_agent(seeker(2));
    for (int minute = 0; minute < 3; ++minute) CHECK(e.step().abandons.empty());
    const StepRecords r = e.step();
    REQUIRE(r.abandons.size() == 1);
    CHECK(r.abandons[0].seeker_id == id);
    CHECK(r.abandons[0].abandon_minute == 3);
    CHECK(r.abandons[0].wait_min == 2);
    CHECK(e.world().agents[static_cast<std::size_t>(id)].state == AgentState::Departed);
    CHECK(e.world().counts.seekers_abandoned == 1);
    CHECK(e.world().counts.holds());
}

TEST_CASE("chat sessions keep both sides busy until they end") {
    Engine e(small_config(Policy::Fcfs, 10), small_bundle());
    e.set_arrivals_enabled(false);
    for (int i = 0; i < 10; ++i) e.step();
    const AgentId s = e.add_agent(seeker(30));
    const AgentId c = e.add_agent(counselor());
    const StepRecords r = e.step();
    REQUIRE(r.matches.size() == 1);
    REQUIRE(r.started.size() == 1);
    const ChatSession session = r.started[0];
    CHECK(session.start_minute == 10);
    CHECK(r.matches[0].match_minute == 10);
    CHECK(r.matches[0].wait_min == 0);
    CHECK(r.matches[0].chat_len_min == session.length_min);
    CHECK(session.length_min >= 1);

    auto state = [&](AgentId id) { return e.world().agents[static_cast<std::size_t>(id)].state; };
    while (e.world().minute < session.end_minute()) {
        CHECK(state(s) == AgentState::Chatting);
        CHECK(state(c) == AgentState::Chatting);
        e.step();
    }
    CHECK(state(s) == AgentState::Chatting);  // the step at end_minute has not run yet
    e.step();
    CHECK(state(s) == AgentState::Departed);
    CHECK(state(c) == AgentState::Departed);
    CHECK(e.world().sessions.empty());
}

TEST_CASE("a seeker past patience is never matched") {
    Engine e(small_config(Policy::Fcfs, 10), small_bundle());
    e.set_arrivals_enabled(false);
    e.add_agent(seeker(1));
    e.step();
    e.step();
    e.step();  // abandons here
    e.add_agent(counselor());
    CHECK(e.step().matches.empty());
    CHECK(e.world().counts.seekers_abandoned == 1);
}

TEST_CASE("runs conserve seekers and respect patience for every policy") {
    for (Policy p : kAllPolicies) {
        CAPTURE(to_string(p));
        const RunResult r = run(small_config(p, 240), small_bundle());
        CHECK(r.counts.holds());
        CHECK(r.counts.seekers_generated > 0);
        CHECK_FALSE(r.matches.empty());

        std::set<AgentId> seen_seekers;
        std::map<AgentId, std::vector<std::pair<int, int>>> busy;  // counselor -> [start, end)
        for (const auto& m : r.matches) {
            CHECK(m.wait_min >= 0);
            CHECK(seen_seekers.insert(m.seeker_id).second);
            CHECK(m.rating_pred >= 1);
            CHECK(m.rating_pred <= 5);
            CHECK(m.oracle_rating >= 1);
            CHECK(m.oracle_rating <= 5);
            busy[m.counselor_id].push_back({m.match_minute, m.match_minute + m.chat_len_min});
        }
        for (const auto& a : r.abandons) CHECK(seen_seekers.insert(a.seeker_id).second);
        for (const auto& [c, spans] : busy) CHECK(spans.size() == 1);  // counselors chat once
        for (const auto& m : r.matches) CHECK(m.match_minute >= r.config.warmup_min);
    }
}

TEST_CASE("matched seekers waited no longer than their patience") {
    RunConfig c = small_config(Policy::Replication, 300);
    Engine e(c, small_bundle());
    for (int t = 0; t < 300; ++t) {
        for (const auto& m : e.step().matches) {
            const Agent& s = e.world().agents[static_cast<std::size_t>(m.seeker_id)];
            CHECK(m.wait_min == m.match_minute - s.arrival_minute);
            CHECK(m.wait_min <= *s.patience_min);
        }
    }
}

TEST_CASE("filter runs never pair across pools") {
    RunConfig c = small_config(Policy::Filter, 600);
    Engine e(c, small_bundle());
    long pairs = 0;
    for (int t = 0; t < 600; ++t) {
        for (const auto& m : e.step().matches) {
            const Agent& s = e.world().agents[static_cast<std::size_t>(m.seeker_id)];
            const Agent& v = e.world().agents[static_cast<std::size_t>(m.counselor_id)];
            CHECK(pool_of(s) == pool_of(v));
            ++pairs;
        }
    }
    CHECK(pairs > 100);
}

TEST_CASE("identical configs give identical results") {
    const RunConfig c = small_config(Policy::RatingBlocking, 200, 9);
    const auto a = result_to_json(run(c, small_bundle())).dump();
    const auto b = result_to_json(run(c, small_bundle())).dump();
    CHECK(a == b);
    const auto other = result_to_json(run(small_config(Policy::RatingBlocking, 200, 10), small_bundle())).dump();
    CHECK(a != other);
}

TEST_CASE("oracle labels come from a stream of their own per pair") {
    for (Policy p : {Policy::Fcfs, Policy::Rating}) {
        RunConfig c = small_config(p, 100);
        Engine e(c, small_bundle());
        for (int t = 0; t < 100; ++t) {
            for (const auto& m : e.step().matches) {
                const Agent& s = e.world().agents[static_cast<std::size_t>(m.seeker_id)];
                const Agent& v = e.world().agents[static_cast<std::size_t>(m.counselor_id)];
                Rng rng = seeded_rng(c.seed, "oracle/" + std::to_string(s.id) + "/" + std::to_string(v.id));
                const OutcomeLabels truth = emit_labels(s, v, small_bundle()->oracle, rng);
                CHECK(m.oracle_rating == truth.rating);
                CHECK(m.oracle_block == truth.block);
                CHECK(m.rating_pred == predict_rating(small_bundle()->rating, s, v));
                CHECK(m.block_pred == predict_block(small_bundle()->block, s, v));
            }
        }
    }
}

TEST_CASE("horizon zero runs no steps") {
    const RunResult r = run(small_config(Policy::Replication, 0), small_bundle());
    CHECK(r.matches.empty());
    CHECK(r.abandons.empty());
    CHECK(r.counts == Conservation{});
    CHECK_FALSE(r.predicted.matching_rate.has_value());
    const auto j = result_to_json(r);
    CHECK(j["summary"]["avg_rating"].is_null());
    CHECK(j["records"]["matches"].empty());
}

TEST_CASE("result document layout") {
    RunConfig c = small_config(Policy::Fcfs, 100);
    const RunResult r = run(c, small_bundle());
    auto j = result_to_json(r);
    CHECK(j["format"] == "matchlab.run");
    CHECK(j["config"]["policy"] == "fcfs");
    CHECK(j["conservation"]["holds"] == true);
    CHECK(j["records"]["matches"].size() == r.matches.size());
    c.records = RecordsMode::Summary;
    CHECK_FALSE(result_to_json(run(c, small_bundle())).contains("records"));
}

TEST_CASE("missing predictor files fail before any step") {
    RunConfig c = small_config(Policy::Rating, 10);
    c.predictors.train_fresh = false;
    c.predictors.rating_model = "does/not/exist_rating.json";
    c.predictors.block_model = "does/not/exist_block.json";
    CHECK_THROWS_AS(run(c), std::runtime_error);
    CHECK_THROWS_AS(Engine(c, nullptr), std::invalid_argument);
}

TEST_CASE("fresh predictors are shared within a process") {
    RunConfig a = small_config(Policy::Rating, 10, 1);
    RunConfig b = small_config(Policy::Blocking, 10, 2);
    CHECK(prepare_predictors(a) == prepare_predictors(b));
    b.predictors.training_seed = 8;
    CHECK(prepare_predictors(a) != prepare_predictors(b));
    CHECK(prepare_predictors(a)->fingerprint != prepare_predictors(b)->fingerprint);
}
