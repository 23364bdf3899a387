#include "wildal/service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "wildal/error.hpp"

namespace wildal {

using json = nlohmann::ordered_json;

struct Service::Server {
    httplib::Server http;
};

namespace {

HttpResponse json_reply(int status, const json& j) { return {status, "application/json", j.dump()}; }

HttpResponse error_reply(int status, std::string_view code, const std::string& message) {
    return json_reply(status, {{"error", code}, {"message", message}});
}

HttpResponse error_reply(const Error& e) {
    int status = 500;
    switch (e.code()) {
        case Errc::NotQueriedOrUnknown: status = 404; break;
        case Errc::Conflict:
        case Errc::LabelConflict: status = 409; break;
        case Errc::EmptyPool:
        case Errc::NoLabels:
        case Errc::NoModel: status = 409; break;
        default: status = is_validation_error(e.code()) ? 400 : 500;
    }
    return error_reply(status, to_string(e.code()), e.what());
}

json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    try {
        auto j = json::parse(body);
        if (!j.is_object()) throw Error(Errc::MalformedRecord, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw Error(Errc::MalformedRecord, std::string("invalid JSON: ") + e.what());
    }
}

json metrics_json(const IterationRecord& r) {
    return {{"iteration", r.iteration},
            {"labeled_count", r.labeled_count},
            {"accuracy", r.accuracy},
            {"weighted_f1", r.weighted_f1},
            {"embedder", r.lambda.embedder},
            {"alpha", r.lambda.alpha},
            {"checkpoint", r.checkpoint},
            {"queried", r.queried.size()}};
}

std::string content_type_for(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".png") return "image/png";
    if (ext == ".tif" || ext == ".tiff") return "image/tiff";
    if (ext == ".bmp") return "image/bmp";
    return "application/octet-stream";
}

std::string category_name(DetectorCategory c) {
    switch (c) {
        case DetectorCategory::animal: return "animal";
        case DetectorCategory::person: return "person";
        case DetectorCategory::vehicle: return "vehicle";
    }
    return "animal";
}

}  // namespace

std::string to_string(JobState s) {
    switch (s) {
        case JobState::pending: return "pending";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "failed";
}

Service::Service(Session& session, bool start_worker) : session_(&session), server_(std::make_unique<Server>()) {
    {
        std::lock_guard lock(engine_);
        refresh_snapshot();
    }
    if (start_worker) this->start_worker();

    auto route = [this](const httplib::Request& req, httplib::Response& res) {
        std::string target = req.path;
        if (!req.params.empty()) {
            target += '?';
            bool first = true;
            for (const auto& [k, v] : req.params) {
                if (!first) target += '&';
                first = false;
                target += k + "=" + v;
            }
        }
        auto r = handle(req.method, target, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server_->http.Get(R"(/api/.*)", route);
    server_->http.Post(R"(/api/.*)", route);
}

Service::~Service() {
    stop();
    {
        std::lock_guard lock(jobs_mutex_);
        stopping_ = true;
    }
    jobs_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void Service::start_worker() {
    if (!worker_.joinable()) worker_ = std::thread([this] { worker_loop(); });
}

int Service::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_->http.bind_to_any_port(host) : (server_->http.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void Service::listen() { server_->http.listen_after_bind(); }

void Service::stop() {
    if (server_) server_->http.stop();
}

void Service::wait_idle() {
    std::unique_lock lock(jobs_mutex_);
    jobs_cv_.wait(lock, [this] { return pending_.empty() && !active_job_; });
}

HttpResponse Service::handle(const std::string& method, const std::string& target, const std::string& body) {
    const auto q = target.find('?');
    const std::string path = target.substr(0, q);
    try {
        if (method == "GET") {
            if (path == "/api/status") return status();
            if (path == "/api/history") return history();
            if (path == "/api/queue") return queue();
            if (path == "/api/export/predictions") return export_predictions();
            if (path.rfind("/api/images/", 0) == 0) return image(httplib::detail::decode_url(path.substr(12), false));
            if (path.rfind("/api/jobs/", 0) == 0) return job(path.substr(10));
        } else if (method == "POST") {
            if (path == "/api/select") return select(body);
            if (path == "/api/labels") return labels(body);
            if (path == "/api/iterate") return start_job("iterate", body);
            if (path == "/api/finalize") return start_job("finalize", body);
        }
        return error_reply(404, "NotFound", method + " " + path);
    } catch (const Error& e) {
        return error_reply(e);
    } catch (const json::exception& e) {
        return error_reply(400, "MalformedRecord", e.what());
    } catch (const std::exception& e) {
        return error_reply(500, "Internal", e.what());
    }
}

void Service::refresh_snapshot() {
    // Caller holds engine_.
    const auto& st = session_->state();
    json last = nullptr;
    if (!st.history.empty()) last = metrics_json(st.history.back());
    json status = {{"iteration", st.iteration},
                   {"labeled", st.labeled.size()},
                   {"unlabeled", st.unlabeled.size()},
                   {"test_size", st.frozen_test.size()},
                   {"queued", st.queued.size()},
                   {"classes", session_->project().dataset().label_space().names()},
                   {"last_metrics", last}};

    json rows = json::array();
    for (const auto& r : st.history) rows.push_back(metrics_json(r));

    const auto& ds = session_->project().dataset();
    const auto& labels = ds.label_space();
    const double alpha = st.last_lambda ? st.last_lambda->alpha : session_->project().settings.pipeline.alpha;
    std::vector<std::string> open;
    for (const auto& id : st.queued) {
        if (st.unlabeled.count(id)) open.push_back(id);
    }
    const auto preds = session_->predict(open);
    json items = json::array();
    for (std::size_t i = 0; i < open.size(); ++i) {
        const auto& set = ds.detection_set(ds.require(open[i]));
        json boxes = json::array();
        for (const auto& d : set.detections) {
            boxes.push_back({{"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                             {"conf", d.confidence},
                             {"category", category_name(d.category)},
                             {"high_confidence", d.category == DetectorCategory::animal && d.confidence >= alpha}});
        }
        json scores = nullptr, predicted = nullptr;
        if (!preds.empty()) {
            scores = json::object();
            for (std::size_t k = 0; k < labels.size(); ++k) scores[labels.name(k)] = preds[i].scores[k];
            predicted = labels.name(preds[i].label);
        }
        items.push_back({{"image_id", open[i]},
                         {"url", "/api/images/" + open[i]},
                         {"boxes", boxes},
                         {"current_scores", scores},
                         {"predicted", predicted}});
    }

    std::lock_guard lock(snapshot_mutex_);
    status_json_ = status.dump();
    history_json_ = json{{"rows", rows}}.dump();
    queue_json_ = json{{"iteration", st.iteration}, {"items", items}}.dump();
}

HttpResponse Service::status() const {
    std::lock_guard lock(snapshot_mutex_);
    auto j = json::parse(status_json_);
    std::lock_guard jl(jobs_mutex_);
    j["active_job"] = active_job_ ? json(*active_job_) : json(nullptr);
    return json_reply(200, j);
}

HttpResponse Service::history() const {
    std::lock_guard lock(snapshot_mutex_);
    return {200, "application/json", history_json_};
}

HttpResponse Service::queue() const {
    std::lock_guard lock(snapshot_mutex_);
    return {200, "application/json", queue_json_};
}

HttpResponse Service::image(const std::string& id) {
    const auto& project = session_->project();
    const auto& ds = project.dataset();
    const auto i = ds.require(id);
    if (project.settings.synthetic) {
        const auto img = render_synthetic_image(*project.settings.synthetic, project.settings.synthetic_seed,
                                                ds.image(i), ds.detection_set(i));
        const auto png = encode_png(img);
        return {200, "image/png", std::string(png.begin(), png.end())};
    }
    std::filesystem::path root = project.settings.image_root.empty() ? project.dir() : std::filesystem::path(project.settings.image_root);
    if (root.is_relative()) root = project.dir() / root;
    const auto file = root / ds.image(i).file_path;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(Errc::NotQueriedOrUnknown, "image file for '" + id + "' not found");
    std::ostringstream ss;
    ss << in.rdbuf();
    return {200, content_type_for(ds.image(i).file_path), ss.str()};
}

HttpResponse Service::select(const std::string& body) {
    const auto req = parse_body(body);
    const std::string key = req.value("idempotency_key", "");
    std::lock_guard lock(engine_);
    if (!key.empty()) {
        std::lock_guard il(idem_mutex_);
        if (auto it = idempotent_.find("select/" + key); it != idempotent_.end()) return it->second;
    }
    std::optional<std::size_t> batch;
    std::optional<bool> stratified;
    if (req.contains("batch_size") && !req["batch_size"].is_null()) {
        const auto b = req["batch_size"].get<long long>();
        if (b < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
        batch = static_cast<std::size_t>(b);
    }
    if (req.contains("stratified") && !req["stratified"].is_null()) stratified = req["stratified"].get<bool>();
    const auto queued = session_->select(batch, stratified);
    refresh_snapshot();
    auto reply = json_reply(200, {{"queued", queued}});
    if (!key.empty()) {
        std::lock_guard il(idem_mutex_);
        idempotent_["select/" + key] = reply;
    }
    return reply;
}

HttpResponse Service::labels(const std::string& body) {
    const auto req = parse_body(body);
    const std::string key = req.value("idempotency_key", "");
    if (!req.contains("labels") || !req["labels"].is_array()) {
        throw Error(Errc::MalformedRecord, "body needs a 'labels' array");
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& l : req["labels"]) pairs.emplace_back(l.at("image_id").get<std::string>(), l.at("label").get<std::string>());

    std::lock_guard lock(engine_);
    if (!key.empty()) {
        std::lock_guard il(idem_mutex_);
        if (auto it = idempotent_.find("labels/" + key); it != idempotent_.end()) return it->second;
    }
    const auto result = session_->submit(pairs);
    refresh_snapshot();
    json rejected = json::array();
    for (const auto& [id, code] : result.rejected) rejected.push_back({{"image_id", id}, {"error", to_string(code)}});
    auto reply = json_reply(200, {{"accepted", result.accepted}, {"rejected", rejected}});
    if (!key.empty()) {
        std::lock_guard il(idem_mutex_);
        idempotent_["labels/" + key] = reply;
    }
    return reply;
}

HttpResponse Service::start_job(const std::string& kind, const std::string& body) {
    const auto req = parse_body(body);
    const std::string key = req.value("idempotency_key", "");
    IterateOptions options;
    if (req.contains("skip_tuning") && !req["skip_tuning"].is_null()) options.skip_tuning = req["skip_tuning"].get<bool>();
    if (req.contains("start_mode") && !req["start_mode"].is_null()) {
        options.start_mode = parse_start_mode(req["start_mode"].get<std::string>());
    }

    std::lock_guard il(idem_mutex_);
    if (!key.empty()) {
        if (auto it = idempotent_.find(kind + "/" + key); it != idempotent_.end()) return it->second;
    }
    std::lock_guard lock(jobs_mutex_);
    if (active_job_ || !pending_.empty()) {
        const std::string busy = active_job_ ? *active_job_ : pending_.front();
        return json_reply(409, {{"error", "Conflict"}, {"message", "job " + busy + " is still running"}, {"job_id", busy}});
    }
    Job j;
    j.id = kind + "-" + std::to_string(next_job_++);
    j.kind = kind;
    j.options = options;
    const auto id = j.id;
    jobs_.emplace(id, std::move(j));
    pending_.push_back(id);
    jobs_cv_.notify_all();
    auto reply = json_reply(202, {{"job_id", id}});
    if (!key.empty()) idempotent_[kind + "/" + key] = reply;
    return reply;
}

HttpResponse Service::job(const std::string& id) const {
    std::lock_guard lock(jobs_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return error_reply(404, "NotFound", "no job '" + id + "'");
    const auto& j = it->second;
    json out = {{"job_id", j.id}, {"kind", j.kind}, {"state", to_string(j.state)}};
    if (!j.record.empty()) out["record"] = json::parse(j.record);
    if (!j.error.empty()) out["error"] = j.error;
    return json_reply(200, out);
}

HttpResponse Service::export_predictions() const {
    const auto path = session_->project().path("predictions.csv");
    std::ifstream in(path, std::ios::binary);
    if (!in) return error_reply(404, "NotFound", "no predictions yet; POST /api/finalize first");
    std::ostringstream ss;
    ss << in.rdbuf();
    return {200, "text/csv", ss.str()};
}

void Service::worker_loop() {
    for (;;) {
        std::string id;
        {
            std::unique_lock lock(jobs_mutex_);
            jobs_cv_.wait(lock, [this] { return stopping_ || !pending_.empty(); });
            if (stopping_ && pending_.empty()) return;
            id = pending_.front();
            pending_.pop_front();
            active_job_ = id;
            jobs_.at(id).state = JobState::running;
        }
        Job snapshot;
        {
            std::lock_guard lock(jobs_mutex_);
            snapshot = jobs_.at(id);
        }
        run_job(snapshot);
        {
            std::lock_guard lock(jobs_mutex_);
            jobs_.at(id) = snapshot;
            active_job_.reset();
        }
        jobs_cv_.notify_all();
    }
}

void Service::run_job(Job& job) {
    try {
        std::lock_guard lock(engine_);
        if (job.kind == "iterate") {
            const auto rec = session_->iterate(job.options);
            job.record = metrics_json(rec).dump();
        } else {
            const auto preds = session_->finalize();
            std::size_t abstained = 0;
            for (const auto& p : preds) abstained += p.abstained;
            job.record = json{{"predictions", preds.size()}, {"abstained", abstained},
                              {"download", "/api/export/predictions"}}
                             .dump();
        }
        refresh_snapshot();
        job.state = JobState::done;
    } catch (const std::exception& e) {
        job.error = e.what();
        job.state = JobState::failed;
    }
}

}  // namespace wildal
