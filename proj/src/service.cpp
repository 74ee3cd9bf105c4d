#include "matchlab/service.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <httplib.h>

#include "matchlab/oracle.hpp"
#include "matchlab/rng.hpp"

namespace matchlab {

std::string_view to_string(ExperimentState s) {
    switch (s) {
    case ExperimentState::Queued: return "queued";
    case ExperimentState::Running: return "running";
    case ExperimentState::Done: return "done";
    case ExperimentState::Failed: return "failed";
    case ExperimentState::Cancelled: return "cancelled";
    }
    return "unknown";
}

std::string resolve_data_dir(const std::string& fallback) {
    if (const char* env = std::getenv("MATCHLAB_DATA_DIR"); env && *env) return env;
    return fallback;
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

nlohmann::json error_body(const std::string& message, const std::vector<FieldError>& fields = {}) {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& e : fields) f.push_back({{"field", e.field}, {"message", e.message}});
    return {{"error", message}, {"fields", f}};
}

ApiResponse not_found(const std::string& id) {
    return {404, error_body("no experiment with id '" + id + "'")};
}

} // namespace

ExperimentService::ExperimentService(ServiceOptions options)
    : data_dir_(options.data_dir.empty() ? resolve_data_dir() : options.data_dir),
      capacity_(std::max<std::size_t>(1, options.capacity)),
      id_state_(std::random_device{}()) {
    std::filesystem::create_directories(std::filesystem::path(data_dir_) / "experiments");
    unsigned n = options.workers;
    if (n == 0) {
        const unsigned cores = std::thread::hardware_concurrency();
        n = cores > 1 ? cores - 1 : 1;
    }
    for (unsigned i = 0; i < n; ++i) threads_.emplace_back([this] { work(); });
}

ExperimentService::~ExperimentService() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
        for (auto& [_, job] : jobs_) job->cancel = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
}

std::string ExperimentService::new_id() {
    // called with mutex_ held
    char buf[17];
    do {
        id_state_ += 0x9e3779b97f4a7c15ULL;
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(splitmix64(id_state_)));
    } while (jobs_.count(buf));
    return buf;
}

ApiResponse ExperimentService::submit(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        return {400, error_body("request body is not valid JSON", {{"", e.what()}})};
    }
    if (j.is_object() && j.contains("output_dir")) {
        return {400, error_body("invalid experiment spec",
                                {{"output_dir", "chosen by the service; leave it out"}})};
    }
    ExperimentSpec spec;
    try {
        spec = parse_experiment_spec(j);
    } catch (const ConfigError& e) {
        return {400, error_body("invalid experiment spec", e.errors())};
    }

    std::shared_ptr<Job> job;
    {
        std::lock_guard lock(mutex_);
        if (active_ >= capacity_) {
            return {429, error_body("service is at capacity (" + std::to_string(capacity_) +
                                    " experiments queued or running); retry later")};
        }
        job = std::make_shared<Job>();
        job->id = new_id();
        spec.output_dir = (std::filesystem::path(data_dir_) / "experiments" / job->id).string();
        job->spec = std::move(spec);
        job->total = job->spec.policies.size() * job->spec.seeds.size();
        job->submitted_at = utc_now();
        jobs_[job->id] = job;
        queue_.push_back(job);
        ++active_;
    }
    wake_.notify_one();
    const std::string url = "/v1/experiments/" + job->id;
    return {202, {{"id", job->id}, {"status_url", url}, {"results_url", url + "/results"}}};
}

nlohmann::json ExperimentService::status_json(const Job& job) const {
    auto opt = [](const std::string& s) { return s.empty() ? nlohmann::json(nullptr) : nlohmann::json(s); };
    return {{"id", job.id},
            {"state", std::string(to_string(job.state))},
            {"progress", {{"completed", job.done.load()}, {"total", job.total}}},
            {"submitted_at", job.submitted_at},
            {"started_at", opt(job.started_at)},
            {"finished_at", opt(job.finished_at)},
            {"error", opt(job.error)}};
}

ApiResponse ExperimentService::status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return not_found(id);
    return {200, status_json(*it->second)};
}

ApiResponse ExperimentService::results(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return not_found(id);
    const Job& job = *it->second;
    if (job.state != ExperimentState::Done) {
        return {404, error_body("results for '" + id + "' are not available; experiment is " +
                                std::string(to_string(job.state)))};
    }
    return {200, job.results};
}

ApiResponse ExperimentService::cancel(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return not_found(id);
    Job& job = *it->second;
    job.cancel = true;
    if (job.state == ExperimentState::Queued) {
        job.state = ExperimentState::Cancelled;
        job.finished_at = utc_now();
        --active_;
    }
    // a running job turns Cancelled when its worker notices; finished jobs keep their state
    return {200, status_json(job)};
}

ApiResponse ExperimentService::policies() const {
    const nlohmann::json da_params = {
        {"recommendation_accept_prob",
         {{"type", "number"}, {"minimum", 0}, {"maximum", 1}, {"default", RunConfig{}.recommendation_accept_prob},
          {"description", "chance a counselor accepts the top recommendation instead of a random listed seeker"}}},
        {"list_limit",
         {{"type", "integer"}, {"minimum", 1}, {"default", RunConfig{}.list_limit},
          {"description", "length of each preference list"}}}};
    nlohmann::json list = nlohmann::json::array();
    for (Policy p : kAllPolicies) {
        nlohmann::json ranks_by = nlohmann::json::array();
        switch (p) {
        case Policy::Similarity: ranks_by = {"cosine_similarity"}; break;
        case Policy::Rating: ranks_by = {"predicted_rating"}; break;
        case Policy::Blocking: ranks_by = {"predicted_block"}; break;
        case Policy::RatingBlocking: ranks_by = {"predicted_rating", "predicted_block"}; break;
        case Policy::Fcfs: ranks_by = {"arrival_order"}; break;
        default: break;
        }
        list.push_back({{"name", std::string(to_string(p))},
                        {"label", std::string(display_name(p))},
                        {"deferred_acceptance", uses_deferred_acceptance(p)},
                        {"ranks_by", ranks_by},
                        {"parameters", uses_deferred_acceptance(p) ? da_params : nlohmann::json::object()}});
    }
    return {200, {{"policies", list}}};
}

ApiResponse ExperimentService::defaults() const {
    const CalibrationTargets t;
    return {200,
            {{"run_config", RunConfig{}},
             {"population", PopulationParams{}},
             {"calibration_targets", {{"rating_shares", t.rating}, {"block_share", t.block}}},
             {"limits", {{"min_horizon_min", 1}, {"max_runs", 1000}, {"capacity", capacity_}}}}};
}

void ExperimentService::work() {
    for (;;) {
        std::shared_ptr<Job> job;
        {
            std::unique_lock lock(mutex_);
            wake_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            job = queue_.front();
            queue_.pop_front();
            if (job->state != ExperimentState::Queued) continue;  // cancelled while queued
            job->state = ExperimentState::Running;
            job->started_at = utc_now();
        }
        execute(job);
    }
}

void ExperimentService::execute(const std::shared_ptr<Job>& job) {
    ExperimentHooks hooks;
    hooks.cancel = &job->cancel;
    hooks.progress = [job](std::size_t done, std::size_t) { job->done = done; };
    ExperimentState end = ExperimentState::Done;
    std::string error;
    nlohmann::json payload;
    try {
        const ExperimentResult r = run_experiment(job->spec, hooks);
        payload = {{"id", job->id}, {"comparison", comparison_json(r)}, {"subgroups", subgroups_json(r)}};
    } catch (const RunCancelled&) {
        end = ExperimentState::Cancelled;
    } catch (const std::exception& e) {
        end = ExperimentState::Failed;
        error = e.what();
    }
    std::lock_guard lock(mutex_);
    if (job->cancel) end = ExperimentState::Cancelled;
    job->state = end;
    job->error = error;
    job->finished_at = utc_now();
    if (end == ExperimentState::Done) job->results = std::move(payload);
    --active_;
}

void ExperimentService::mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    const std::string id_pattern = "([0-9a-f]{16}|[^/]+)";
    server.Post("/v1/experiments", [this, reply](const httplib::Request& req, httplib::Response& res) {
        const ApiResponse r = submit(req.body);
        if (r.status == 202) res.set_header("Location", r.body["status_url"].get<std::string>());
        reply(res, r);
    });
    server.Get("/v1/experiments/" + id_pattern,
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, status(req.matches[1]));
               });
    server.Get("/v1/experiments/" + id_pattern + "/results",
               [this, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, results(req.matches[1]));
               });
    server.Delete("/v1/experiments/" + id_pattern,
                  [this, reply](const httplib::Request& req, httplib::Response& res) {
                      reply(res, cancel(req.matches[1]));
                  });
    server.Get("/v1/policies", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, policies());
    });
    server.Get("/v1/defaults", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, defaults());
    });
    server.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        reply(res, {res.status, error_body("no route for " + req.method + " " + req.path)});
    });
    server.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, {500, error_body(what)});
    });
}

int serve(const std::string& host, int port, ServiceOptions options) {
    ExperimentService service(std::move(options));
    httplib::Server server;
    service.mount(server);
    std::cerr << "matchlab: serving /v1 on " << host << ":" << port << " (data in " << service.data_dir()
              << ", " << service.workers() << " worker(s))\n";
    if (!server.listen(host, port)) {
        std::cerr << "matchlab: cannot listen on " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

} // namespace matchlab
