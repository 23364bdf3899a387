#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "wildal/session.hpp"

namespace wildal {

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

enum class JobState { pending, running, done, failed };
std::string to_string(JobState s);

/// HTTP facade for the labeling console. Mutations go through the session
/// under one lock; iterate and finalize run on a single worker thread.
/// Status, history and queue reads come from a snapshot refreshed after each
/// mutation, so they never wait for a running job.
class Service {
public:
    // With start_worker = false, jobs stay pending until start_worker().
    explicit Service(Session& session, bool start_worker = true);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Routing without sockets; `path` may carry a query string.
    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

    // Binds host:port (0 picks a free port) and returns the port. Throws BindFailure.
    int bind(const std::string& host, int port);
    // Serves until stop(); call after bind().
    void listen();
    void stop();

    void start_worker();

    // Blocks until no job is pending or running (tests, shutdown).
    void wait_idle();

private:
    struct Job {
        std::string id;
        std::string kind;
        JobState state = JobState::pending;
        std::string record;  // JSON text
        std::string error;
        IterateOptions options;
    };

    HttpResponse status() const;
    HttpResponse history() const;
    HttpResponse queue() const;
    HttpResponse image(const std::string& id);
    HttpResponse select(const std::string& body);
    HttpResponse labels(const std::string& body);
    HttpResponse start_job(const std::string& kind, const std::string& body);
    HttpResponse job(const std::string& id) const;
    HttpResponse export_predictions() const;

    void refresh_snapshot();
    void worker_loop();
    void run_job(Job& job);

    Session* session_;
    std::mutex engine_;

    mutable std::mutex snapshot_mutex_;
    std::string status_json_;
    std::string history_json_;
    std::string queue_json_;

    mutable std::mutex jobs_mutex_;
    std::condition_variable jobs_cv_;
    std::map<std::string, Job> jobs_;
    std::deque<std::string> pending_;
    std::optional<std::string> active_job_;
    std::uint64_t next_job_ = 1;
    bool stopping_ = false;

    std::mutex idem_mutex_;
    std::map<std::string, HttpResponse> idempotent_;

    std::thread worker_;
    struct Server;
    std::unique_ptr<Server> server_;
};

}  // namespace wildal
