#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "project_fixture.hpp"
#include "wildal/service.hpp"

using namespace wildal;
using nlohmann::json;

namespace {

json get_json(Service& svc, const std::string& path, int expect = 200) {
    const auto r = svc.handle("GET", path, "");
    CHECK_MESSAGE(r.status == expect, path << " -> " << r.body);
    return json::parse(r.body);
}

HttpResponse post(Service& svc, const std::string& path, const json& body) {
    return svc.handle("POST", path, body.dump());
}

json labels_body(const fixture::DiskProject& fx, const std::vector<std::string>& ids, const std::string& key = "") {
    json items = json::array();
    for (const auto& [id, label] : fx.answers(ids)) items.push_back({{"image_id", id}, {"label", label}});
    json body = {{"labels", items}};
    if (!key.empty()) body["idempotency_key"] = key;
    return body;
}

std::vector<std::string> queued_ids(Service& svc) {
    std::vector<std::string> ids;
    const auto q = get_json(svc, "/api/queue");
    for (const auto& item : q["items"]) ids.push_back(item["image_id"]);
    return ids;
}

json run_job(Service& svc, const std::string& path, const json& body = json::object()) {
    const auto r = post(svc, path, body);
    REQUIRE_MESSAGE(r.status == 202, r.body);
    const std::string id = json::parse(r.body)["job_id"];
    svc.wait_idle();
    return get_json(svc, "/api/jobs/" + id);
}

}  // namespace

TEST_CASE("fresh status and history") {
    fixture::DiskProject fx;
    Session session(Project::open(fx.dir()));
    Service svc(session);

    const auto st = get_json(svc, "/api/status");
    CHECK(st["iteration"] == 0);
    CHECK(st["queued"] == 0);
    CHECK(st["active_job"].is_null());
    CHECK(st["classes"][0] == "empty");
    CHECK(st["labeled"].get<std::size_t>() + st["test_size"].get<std::size_t>() ==
          session.project().dataset().labeled_count());
    CHECK(get_json(svc, "/api/history")["rows"].empty());
    CHECK(get_json(svc, "/api/queue")["items"].empty());
    CHECK(get_json(svc, "/api/export/predictions", 404)["error"] == "NotFound");
    CHECK(svc.handle("GET", "/api/nope", "").status == 404);
}

TEST_CASE("select, label and iterate through the handlers") {
    fixture::DiskProject fx;
    Session session(Project::open(fx.dir()));
    Service svc(session);
    const auto frozen = session.state().frozen_test;

    auto rec = run_job(svc, "/api/iterate");
    REQUIRE(rec["state"] == "done");
    CHECK(rec["record"]["iteration"] == 0);

    const auto sel = post(svc, "/api/select", {{"batch_size", 5}});
    REQUIRE(sel.status == 200);
    const auto ids = queued_ids(svc);
    REQUIRE(ids.size() == 5);
    CHECK(json::parse(sel.body)["queued"].get<std::vector<std::string>>() == ids);

    SUBCASE("queue items carry boxes, scores and an image url") {
        const auto items = get_json(svc, "/api/queue")["items"];
        for (const auto& item : items) {
            CHECK(item["url"] == "/api/images/" + item["image_id"].get<std::string>());
            double sum = 0;
            for (double p : item["current_scores"]) sum += p;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            for (const auto& b : item["boxes"]) CHECK(b["bbox"].size() == 4);
        }
        const auto img = svc.handle("GET", "/api/images/" + ids[0], "");
        CHECK(img.status == 200);
        CHECK(img.content_type == "image/png");
        CHECK(img.body.substr(1, 3) == "PNG");
        CHECK(svc.handle("GET", "/api/images/no_such_image", "").status == 404);
    }

    SUBCASE("labeling one queued image grows the labeled pool by one") {
        const auto before = get_json(svc, "/api/status")["labeled"].get<std::size_t>();
        const auto r = post(svc, "/api/labels", labels_body(fx, {ids[0]}));
        REQUIRE(r.status == 200);
        CHECK(json::parse(r.body)["accepted"].size() == 1);
        CHECK(get_json(svc, "/api/status")["labeled"] == before + 1);
    }

    SUBCASE("a repeated idempotency key replays the first response") {
        const auto first = post(svc, "/api/labels", labels_body(fx, {ids[0], ids[1]}, "batch-a"));
        const auto labeled = get_json(svc, "/api/status")["labeled"];
        const auto again = post(svc, "/api/labels", labels_body(fx, {ids[2]}, "batch-a"));
        CHECK(again.status == first.status);
        CHECK(again.body == first.body);
        CHECK(get_json(svc, "/api/status")["labeled"] == labeled);
    }

    SUBCASE("bad submissions are rejected per image") {
        json body = {{"labels", {{{"image_id", *frozen.begin()}, {"label", "empty"}},
                                 {{"image_id", ids[0]}, {"label", "unicorn"}},
                                 {{"image_id", "ghost"}, {"label", "empty"}}}}};
        const auto r = json::parse(post(svc, "/api/labels", body).body);
        CHECK(r["accepted"].empty());
        CHECK(r["rejected"].size() == 3);
        CHECK(post(svc, "/api/labels", json{{"nope", 1}}).status == 400);
        CHECK(svc.handle("POST", "/api/labels", "{broken").status == 400);
        CHECK(post(svc, "/api/select", {{"batch_size", 0}}).status == 400);
    }

    SUBCASE("second iteration keeps the frozen test set and extends history") {
        REQUIRE(post(svc, "/api/labels", labels_body(fx, ids)).status == 200);
        auto second = run_job(svc, "/api/iterate", {{"skip_tuning", true}, {"start_mode", "warm"}});
        REQUIRE(second["state"] == "done");
        CHECK(second["record"]["iteration"] == 1);
        CHECK(second["record"]["queried"] == 5);
        CHECK(session.state().frozen_test == frozen);
        const auto hist = get_json(svc, "/api/history")["rows"];
        REQUIRE(hist.size() == 2);
        CHECK(hist[1]["checkpoint"] == "checkpoints/iter_0001.head");
        CHECK(get_json(svc, "/api/status")["last_metrics"]["iteration"] == 1);
    }

    SUBCASE("finalize writes predictions for the unlabeled pool") {
        auto fin = run_job(svc, "/api/finalize");
        REQUIRE(fin["state"] == "done");
        CHECK(fin["record"]["predictions"] == session.state().unlabeled.size());
        const auto csv = svc.handle("GET", "/api/export/predictions", "");
        CHECK(csv.status == 200);
        CHECK(csv.content_type == "text/csv");
        CHECK(std::count(csv.body.begin(), csv.body.end(), '\n') ==
              static_cast<long>(session.state().unlabeled.size()) + 1);
    }
}

TEST_CASE("a second iterate while one is outstanding is a conflict") {
    fixture::DiskProject fx;
    Session session(Project::open(fx.dir()));
    Service svc(session, false);

    const auto first = post(svc, "/api/iterate", {{"idempotency_key", "k1"}});
    REQUIRE(first.status == 202);
    const std::string id = json::parse(first.body)["job_id"];
    CHECK(get_json(svc, "/api/jobs/" + id)["state"] == "pending");
    CHECK(get_json(svc, "/api/status")["active_job"].is_null());

    const auto second = post(svc, "/api/iterate", json::object());
    CHECK(second.status == 409);
    CHECK(json::parse(second.body)["job_id"] == id);
    CHECK(post(svc, "/api/finalize", json::object()).status == 409);
    // Same key returns the original acceptance rather than a conflict.
    CHECK(post(svc, "/api/iterate", {{"idempotency_key", "k1"}}).body == first.body);

    svc.start_worker();
    svc.wait_idle();
    CHECK(get_json(svc, "/api/jobs/" + id)["state"] == "done");
    CHECK(get_json(svc, "/api/history")["rows"].size() == 1);
    CHECK(get_json(svc, "/api/jobs/unknown", 404)["error"] == "NotFound");
}

TEST_CASE("a failing job is reported, not thrown") {
    fixture::DiskProject fx;
    Session session(Project::open(fx.dir()));
    Service svc(session);
    // No model yet, so finalize fails.
    auto fin = run_job(svc, "/api/finalize");
    CHECK(fin["state"] == "failed");
    CHECK_FALSE(fin["error"].get<std::string>().empty());
    CHECK(post(svc, "/api/iterate", {{"start_mode", "tepid"}}).status == 400);
}

TEST_CASE("serves the API over HTTP on an ephemeral port") {
    fixture::DiskProject fx;
    Session session(Project::open(fx.dir()));
    Service svc(session);
    const int port = svc.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread server([&] { svc.listen(); });

    httplib::Client client("127.0.0.1", port);
    auto st = client.Get("/api/status");
    REQUIRE(st);
    CHECK(st->status == 200);
    CHECK(json::parse(st->body)["iteration"] == 0);

    auto it = client.Post("/api/iterate", "{}", "application/json");
    REQUIRE(it);
    CHECK(it->status == 202);
    svc.wait_idle();
    auto hist = client.Get("/api/history");
    REQUIRE(hist);
    CHECK(json::parse(hist->body)["rows"].size() == 1);

    auto sel = client.Post("/api/select", R"({"batch_size": 3})", "application/json");
    REQUIRE(sel);
    CHECK(json::parse(sel->body)["queued"].size() == 3);
    CHECK(client.Get("/api/missing")->status == 404);

    svc.stop();
    server.join();
}
