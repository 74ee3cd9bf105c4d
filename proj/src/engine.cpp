#include "matchlab/engine.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace matchlab {

// ---------------------------------------------------------------- predictors

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << v;
    return out.str();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

OracleParams load_oracle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open oracle file " + path);
    nlohmann::json j;
    try {
        in >> j;
        return j.get<OracleParams>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("oracle file " + path + " is malformed: " + e.what());
    }
}

} // namespace

FreshTraining train_fresh_bundle(const PopulationParams& population, const PredictorSource& source,
                                 const OracleParams* oracle_start) {
    FreshTraining out;
    const AgentFactory factory(population);
    out.calibration = calibrate(oracle_start ? *oracle_start : OracleParams{}, factory,
                                CalibrationTargets{});
    Rng corpus_rng = seeded_rng(source.training_seed, "corpus");
    const auto corpus = generate_corpus(source.corpus_size, out.calibration.params, factory, corpus_rng);
    TrainingOptions options;
    options.forest.n_trees = source.n_trees;
    options.seed = source.training_seed;
    out.trained = train_predictors(corpus, options);

    auto bundle = std::make_shared<PredictorBundle>();
    bundle->oracle = out.calibration.params;
    bundle->rating = out.trained.rating;
    bundle->block = out.trained.block;
    nlohmann::json key = {{"population", population},
                          {"oracle", out.calibration.params},
                          {"training_seed", source.training_seed},
                          {"corpus_size", source.corpus_size},
                          {"n_trees", source.n_trees}};
    bundle->fingerprint = "fresh:" + hex64(fnv1a(key.dump()));
    out.bundle = std::move(bundle);
    return out;
}

std::shared_ptr<const PredictorBundle> prepare_predictors(const RunConfig& config) {
    const auto& src = config.predictors;
    std::optional<OracleParams> oracle;
    if (!src.oracle.empty()) oracle = load_oracle(src.oracle);

    if (!src.train_fresh) {
        auto bundle = std::make_shared<PredictorBundle>();
        bundle->rating = load_model(src.rating_model);
        bundle->block = load_model(src.block_model);
        if (bundle->rating.kind != OutcomeKind::Rating) {
            throw std::runtime_error("model file " + src.rating_model + " does not predict ratings");
        }
        if (bundle->block.kind != OutcomeKind::Block) {
            throw std::runtime_error("model file " + src.block_model + " does not predict blocks");
        }
        bundle->oracle = oracle ? *oracle
                                : calibrate(OracleParams{}, AgentFactory(config.population),
                                            CalibrationTargets{})
                                      .params;
        nlohmann::json key = {{"rating", src.rating_model},
                              {"block", src.block_model},
                              {"oracle", bundle->oracle}};
        bundle->fingerprint = "files:" + hex64(fnv1a(key.dump()));
        return bundle;
    }

    static std::mutex cache_mutex;
    static std::map<std::string, std::shared_ptr<const PredictorBundle>> cache;
    nlohmann::json key = {{"population", config.population},
                          {"oracle", oracle ? nlohmann::json(*oracle) : nlohmann::json()},
                          {"training_seed", src.training_seed},
                          {"corpus_size", src.corpus_size},
                          {"n_trees", src.n_trees}};
    const std::string k = key.dump();
    std::lock_guard lock(cache_mutex);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    auto fresh = train_fresh_bundle(config.population, src, oracle ? &*oracle : nullptr);
    cache.emplace(k, fresh.bundle);
    return fresh.bundle;
}

// ---------------------------------------------------------------- engine

Engine::Engine(const RunConfig& config, std::shared_ptr<const PredictorBundle> predictors)
    : config_(config),
      predictors_(std::move(predictors)),
      factory_(config.population),
      similarity_scaling_(FeatureScaling::from_population(config.population)),
      clock_(config.population.decision_rate_per_min),
      target_rng_(seeded_rng(config.seed, "arrivals.targets")),
      seeker_attr_rng_(seeded_rng(config.seed, "arrivals.seeker")),
      counselor_attr_rng_(seeded_rng(config.seed, "arrivals.counselor")),
      patience_rng_(seeded_rng(config.seed, "patience")),
      chat_rng_(seeded_rng(config.seed, "chat_length")),
      matching_rng_(seeded_rng(config.seed, "matching")),
      noise_rng_(seeded_rng(config.seed, "recommendation_noise")),
      chat_len_(chat_length_distribution(config.population)) {
    config_.validate();
    if (!predictors_) throw std::invalid_argument("engine needs predictors");
    scores_ = ScoreTable([this](const Agent& s, const Agent& c) { return score(s, c); });
}

PairScore Engine::score(const Agent& seeker, const Agent& counselor) const {
    return make_pair_score(seeker.id, counselor.id, predict_rating(predictors_->rating, seeker, counselor),
                           predict_block(predictors_->block, seeker, counselor),
                           cosine_similarity(seeker, counselor, similarity_scaling_));
}

// Fills only the fields the policy ranks by; the other fields keep their
// defaults. Match records score their pair in full, separately.
void Engine::prescore(const RoundState& round) {
    std::vector<std::pair<const Agent*, const Agent*>> missing;
    for (AgentId s : round.seekers) {
        for (AgentId c : round.counselors) {
            if (!scores_.contains(s, c)) {
                missing.emplace_back(&world_.agents[static_cast<std::size_t>(s)],
                                     &world_.agents[static_cast<std::size_t>(c)]);
            }
        }
    }
    if (missing.empty()) return;
    const Policy policy = config_.policy;
    const bool want_rating = policy == Policy::Rating || policy == Policy::RatingBlocking;
    const bool want_block = policy == Policy::Blocking || policy == Policy::RatingBlocking;
    const bool want_similarity = policy == Policy::Similarity;

    auto predict_all = [&](const OutcomeModel& model) {
        std::vector<double> rows;
        rows.reserve(missing.size() * kPairEncodingDim);
        for (const auto& [s, c] : missing) {
            const auto x = encode_pair(*s, *c, model.scaling);
            rows.insert(rows.end(), x.begin(), x.end());
        }
        return predict_labels(model, rows);
    };
    std::vector<int> ratings, blocks;
    if (want_rating) ratings = predict_all(predictors_->rating);
    if (want_block) blocks = predict_all(predictors_->block);
    for (std::size_t i = 0; i < missing.size(); ++i) {
        const auto& [s, c] = missing[i];
        scores_.insert(make_pair_score(
            s->id, c->id, want_rating ? ratings[i] : 1, want_block ? blocks[i] : 0,
            want_similarity ? cosine_similarity(*s, *c, similarity_scaling_) : 0.0));
    }
}

AgentId Engine::add_agent(Agent agent) {
    agent.id = ids_.next();
    agent.arrival_minute = world_.minute;
    agent.state = AgentState::Waiting;
    validate_agent(agent);
    if (agent.role == Role::Seeker) {
        world_.waiting_seekers.push_back(agent.id);
        ++world_.counts.seekers_generated;
        ++world_.counts.seekers_waiting;
    } else {
        world_.waiting_counselors.push_back(agent.id);
        ++world_.counts.counselors_generated;
    }
    world_.agents.push_back(agent);
    return agent.id;
}

StepRecords Engine::step() {
    StepRecords out;
    const int minute = world_.minute;
    end_sessions(minute);
    if (arrivals_enabled_) arrive(minute);
    abandon(minute, out);
    match(minute, out);
    ++world_.minute;
    return out;
}

void Engine::end_sessions(int minute) {
    auto& sessions = world_.sessions;
    auto done = std::stable_partition(sessions.begin(), sessions.end(),
                                      [minute](const ChatSession& s) { return s.end_minute() != minute; });
    for (auto it = done; it != sessions.end(); ++it) {
        transition(world_.agents[static_cast<std::size_t>(it->seeker_id)], AgentState::Departed);
        transition(world_.agents[static_cast<std::size_t>(it->counselor_id)], AgentState::Departed);
    }
    sessions.erase(done, sessions.end());
}

void Engine::arrive(int minute) {
    const auto& pop = config_.population;
    const int chatting = static_cast<int>(world_.sessions.size());
    const int seeker_target = sample_online_target(pop, Role::Seeker, minute, target_rng_);
    const int counselor_target = sample_online_target(pop, Role::Counselor, minute, target_rng_);

    auto seekers = generate_arrivals(factory_, ids_, seeker_target,
                                     static_cast<int>(world_.waiting_seekers.size()) + chatting,
                                     Role::Seeker, minute, seeker_attr_rng_, patience_rng_);
    for (auto& a : seekers) {
        world_.waiting_seekers.push_back(a.id);
        world_.agents.push_back(std::move(a));
    }
    world_.counts.seekers_generated += static_cast<long>(seekers.size());
    world_.counts.seekers_waiting += static_cast<long>(seekers.size());

    auto counselors = generate_arrivals(factory_, ids_, counselor_target,
                                        static_cast<int>(world_.waiting_counselors.size()) + chatting,
                                        Role::Counselor, minute, counselor_attr_rng_, patience_rng_);
    for (auto& a : counselors) {
        world_.waiting_counselors.push_back(a.id);
        world_.agents.push_back(std::move(a));
    }
    world_.counts.counselors_generated += static_cast<long>(counselors.size());
}

void Engine::abandon(int minute, StepRecords& out) {
    auto& waiting = world_.waiting_seekers;
    auto keep = waiting.begin();
    for (AgentId id : waiting) {
        Agent& a = world_.agents[static_cast<std::size_t>(id)];
        if (minute - a.arrival_minute > *a.patience_min) {
            transition(a, AgentState::Departed);
            out.abandons.push_back({a.id, minute, *a.patience_min, a.is_teen(), a.is_minority()});
            --world_.counts.seekers_waiting;
            ++world_.counts.seekers_abandoned;
        } else {
            *keep++ = id;
        }
    }
    waiting.erase(keep, waiting.end());
}

void Engine::match(int minute, StepRecords& out) {
    RoundState round{world_.waiting_seekers, world_.waiting_counselors, minute};
    const auto& agents = world_.agents;
    const AgentLookup lookup = [&agents](AgentId id) -> const Agent& {
        return agents[static_cast<std::size_t>(id)];
    };

    Matching m;
    switch (config_.policy) {
        case Policy::Replication:
            m = replication_match(round, clock_, matching_rng_);
            break;
        case Policy::Filter:
            m = filter_pool_match(round, lookup, clock_, matching_rng_);
            break;
        default: {
            if (round.seekers.empty() || round.counselors.empty()) return;
            // Scores are pure functions of the pair, so dropping the cache only costs time.
            if (scores_.size() > 500000) scores_.clear();
            prescore(round);
            auto prefs = build_preferences(config_.policy, round, lookup, scores_, config_.list_limit);
            prefs = apply_recommendation_noise(std::move(prefs), config_.recommendation_accept_prob,
                                               noise_rng_);
            m = deferred_acceptance(prefs);
            break;
        }
    }
    if (m.pairs.empty()) return;

    for (const auto& [s, c] : m.pairs) start_chat(s, c, minute, out);
    auto drop_matched = [this](std::vector<AgentId>& ids) {
        ids.erase(std::remove_if(ids.begin(), ids.end(),
                                 [this](AgentId id) {
                                     return world_.agents[static_cast<std::size_t>(id)].state !=
                                            AgentState::Waiting;
                                 }),
                  ids.end());
    };
    drop_matched(world_.waiting_seekers);
    drop_matched(world_.waiting_counselors);
}

void Engine::start_chat(AgentId seeker_id, AgentId counselor_id, int minute, StepRecords& out) {
    Agent& seeker = world_.agents[static_cast<std::size_t>(seeker_id)];
    Agent& counselor = world_.agents[static_cast<std::size_t>(counselor_id)];
    transition(seeker, AgentState::Chatting);
    transition(counselor, AgentState::Chatting);
    clock_.forget(counselor_id);

    const ChatSession session{seeker_id, counselor_id, minute, chat_len_.sample(chat_rng_)};
    world_.sessions.push_back(session);
    out.started.push_back(session);

    const PairScore ps = score(seeker, counselor);
    // Each pair's ground truth has its own stream, so it does not depend on the policy.
    Rng label_rng = seeded_rng(config_.seed, "oracle/" + std::to_string(seeker_id) + "/" +
                                                 std::to_string(counselor_id));
    const OutcomeLabels truth = emit_labels(seeker, counselor, predictors_->oracle, label_rng);

    MatchRecord r;
    r.seeker_id = seeker_id;
    r.counselor_id = counselor_id;
    r.match_minute = minute;
    r.wait_min = minute - seeker.arrival_minute;
    r.chat_len_min = session.length_min;
    r.rating_pred = ps.rating_pred;
    r.block_pred = ps.block_pred;
    r.oracle_rating = truth.rating;
    r.oracle_block = truth.block;
    r.teen = seeker.is_teen();
    r.minority = seeker.is_minority();
    out.matches.push_back(r);

    --world_.counts.seekers_waiting;
    ++world_.counts.seekers_matched;
}

// ---------------------------------------------------------------- runs

RunResult run(const RunConfig& config) {
    config.validate();
    return run(config, prepare_predictors(config));
}

RunResult run(const RunConfig& config, std::shared_ptr<const PredictorBundle> predictors,
              const std::atomic<bool>* stop, const StepObserver& observe) {
    RunResult result;
    result.config = config;
    result.predictor_fingerprint = predictors ? predictors->fingerprint : std::string();
    Engine engine(config, std::move(predictors));
    if (config.horizon_min > 0) {
        const int total = config.warmup_min + config.horizon_min;
        for (int t = 0; t < total; ++t) {
            if (stop && stop->load(std::memory_order_relaxed)) throw RunCancelled();
            auto rec = engine.step();
            if (t < config.warmup_min) continue;
            if (observe) observe(engine.world());
            result.matches.insert(result.matches.end(), rec.matches.begin(), rec.matches.end());
            result.abandons.insert(result.abandons.end(), rec.abandons.begin(), rec.abandons.end());
        }
    }
    result.counts = engine.world().counts;
    result.predicted = compute_outcomes(result.matches, result.abandons, OutcomeSource::Predicted);
    result.oracle = compute_outcomes(result.matches, result.abandons, OutcomeSource::Oracle);
    result.subgroups = subgroup_breakdown(result.matches, result.abandons, OutcomeSource::Predicted);
    if (!result.matches.empty()) {
        std::array<long, 5> counts{};
        long blocked = 0;
        for (const auto& m : result.matches) {
            ++counts[static_cast<std::size_t>(m.oracle_rating - 1)];
            blocked += m.oracle_block;
        }
        const double n = static_cast<double>(result.matches.size());
        for (std::size_t i = 0; i < 5; ++i) result.oracle_rating_shares[i] = counts[i] / n;
        result.oracle_block_share = blocked / n;
    }
    return result;
}

nlohmann::json result_to_json(const RunResult& r) {
    nlohmann::json conservation = {{"seekers_generated", r.counts.seekers_generated},
                                   {"seekers_matched", r.counts.seekers_matched},
                                   {"seekers_abandoned", r.counts.seekers_abandoned},
                                   {"seekers_waiting", r.counts.seekers_waiting},
                                   {"counselors_generated", r.counts.counselors_generated},
                                   {"holds", r.counts.holds()}};
    nlohmann::json j = {
        {"format", "matchlab.run"},
        {"version", 1},
        {"config", r.config},
        {"predictors", r.predictor_fingerprint},
        {"summary", r.predicted},
        {"oracle_summary", r.oracle},
        {"subgroups", r.subgroups},
        {"oracle_marginals",
         {{"rating_shares", r.matches.empty() ? nlohmann::json(nullptr)
                                              : nlohmann::json(r.oracle_rating_shares)},
          {"block_share", r.oracle_block_share ? nlohmann::json(*r.oracle_block_share)
                                               : nlohmann::json(nullptr)}}},
        {"conservation", conservation},
    };
    if (r.config.records == RecordsMode::Full) {
        j["records"] = {{"matches", r.matches}, {"abandons", r.abandons}};
    }
    return j;
}

void write_result(const RunResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write result file " + path);
    out << result_to_json(result).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing result file " + path);
}

} // namespace matchlab
