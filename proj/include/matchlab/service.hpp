#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "matchlab/experiment.hpp"

namespace httplib {
class Server;
}

namespace matchlab {

enum class ExperimentState { Queued, Running, Done, Failed, Cancelled };
std::string_view to_string(ExperimentState s);

struct ServiceOptions {
    std::string data_dir;        // empty: MATCHLAB_DATA_DIR, else ./matchlab-data
    unsigned workers = 0;        // concurrent experiments; 0: cores - 1, at least 1
    std::size_t capacity = 16;   // queued + running experiments before 429
};

/// Artifact root: MATCHLAB_DATA_DIR if set, else `fallback`.
std::string resolve_data_dir(const std::string& fallback = "matchlab-data");

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

/// Experiment queue behind the /v1 HTTP API. Handlers are plain methods so
/// they can be exercised without a socket.
class ExperimentService {
public:
    explicit ExperimentService(ServiceOptions options = {});
    ~ExperimentService();
    ExperimentService(const ExperimentService&) = delete;
    ExperimentService& operator=(const ExperimentService&) = delete;

    ApiResponse submit(const std::string& body);
    ApiResponse status(const std::string& id) const;
    ApiResponse results(const std::string& id) const;
    ApiResponse cancel(const std::string& id);
    ApiResponse policies() const;
    ApiResponse defaults() const;

    /// Registers every /v1 route on `server`.
    void mount(httplib::Server& server);

    const std::string& data_dir() const { return data_dir_; }
    unsigned workers() const { return static_cast<unsigned>(threads_.size()); }

private:
    struct Job {
        std::string id;
        ExperimentSpec spec;
        std::atomic<bool> cancel{false};
        std::atomic<std::size_t> done{0};
        std::size_t total = 0;
        // guarded by the service mutex
        ExperimentState state = ExperimentState::Queued;
        std::string submitted_at, started_at, finished_at, error;
        nlohmann::json results;
    };

    void work();
    void execute(const std::shared_ptr<Job>& job);
    nlohmann::json status_json(const Job& job) const;
    std::string new_id();

    std::string data_dir_;
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable wake_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::deque<std::shared_ptr<Job>> queue_;
    std::size_t active_ = 0;  // queued + running
    bool stopping_ = false;
    std::uint64_t id_state_;
    std::vector<std::thread> threads_;
};

/// Blocks serving the API on host:port until the process is stopped.
int serve(const std::string& host, int port, ServiceOptions options);

} // namespace matchlab
