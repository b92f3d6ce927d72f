#include "doctest.h"

#include <random>
#include <set>
#include <thread>

#include <httplib.h>

#include "jitagent/common.hpp"
#include "jitagent/service/service.hpp"
#include "test_util.hpp"

using namespace jitagent;
using namespace jitagent::service;
using nlohmann::json;

namespace {

std::string data(const std::string& rel) { return std::string(JITAGENT_DATA_DIR) + "/" + rel; }

json reply(const std::string& code, bool final = true) {
    return {{"thinking", "t"}, {"action_code", "js:" + code}, {"final_step", final}};
}

std::shared_ptr<llm::Provider> table_file(const std::string& name) {
    return std::make_shared<llm::ScriptedProvider>(llm::ScriptTable::load(data("scripts/" + name)));
}

std::shared_ptr<llm::Provider> table(const json& j) {
    return std::make_shared<llm::ScriptedProvider>(llm::ScriptTable::from_json(j));
}

// Adds latency to every model call so streams can be joined mid-session.
class Slow : public llm::Provider {
public:
    Slow(std::shared_ptr<llm::Provider> inner, std::chrono::milliseconds d) : inner_(std::move(inner)), delay_(d) {}
    std::string complete(const llm::ChatRequest& r) override {
        std::this_thread::sleep_for(delay_);
        return inner_->complete(r);
    }
    std::string name() const override { return "slow"; }

private:
    std::shared_ptr<llm::Provider> inner_;
    std::chrono::milliseconds delay_;
};

ServiceConfig config(const TempDir& dir, std::string fixture = "default", bool raw = false) {
    ServiceConfig c;
    c.port = 0;
    c.data_dir = dir.path() / "store";
    c.fixture = std::move(fixture);
    c.allow_raw_exec = raw;
    c.ui_dir = data("ui");
    return c;
}

httplib::Client client(int port) {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(20, 0);
    return c;
}

json post(httplib::Client& c, const std::string& path, const json& body, int expect) {
    auto r = c.Post(path, body.dump(), "application/json");
    REQUIRE(r);
    INFO(path << " -> " << r->status << " " << r->body);
    CHECK(r->status == expect);
    return r->body.empty() ? json() : json::parse(r->body);
}

json get(httplib::Client& c, const std::string& path, int expect = 200) {
    auto r = c.Get(path);
    REQUIRE(r);
    INFO(path << " -> " << r->status << " " << r->body);
    CHECK(r->status == expect);
    return r->body.empty() ? json() : json::parse(r->body, nullptr, false);
}

std::vector<json> read_stream(int port, const std::string& id, const std::string& query = "") {
    httplib::Client c = client(port);
    std::string body;
    auto r = c.Get("/sessions/" + id + "/events" + query, [&](const char* d, std::size_t n) {
        body.append(d, n);
        return true;
    });
    REQUIRE(r);
    REQUIRE(r->status == 200);
    std::vector<json> out;
    std::size_t pos = 0;
    while ((pos = body.find("data: ", pos)) != std::string::npos) {
        std::size_t end = body.find('\n', pos);
        out.push_back(json::parse(body.substr(pos + 6, end - pos - 6)));
        pos = end;
    }
    return out;
}

std::string status_of(httplib::Client& c, const std::string& id) { return get(c, "/sessions/" + id)["status"]; }

}  // namespace

TEST_CASE("session lifecycle over HTTP with a replayable event stream") {
    TempDir dir;
    Service svc(config(dir), table_file("table2_oracle.json"));
    int port = svc.start();
    auto c = client(port);

    std::string id = post(c, "/sessions", {{"instruction", "Play the next song"}}, 201)["id"];
    svc.drain();
    json s = get(c, "/sessions/" + id);
    CHECK(s["status"] == "succeeded");
    CHECK(s["iterations"].size() == 1);
    CHECK(s["state"]["player"]["current_index"] == 2);
    CHECK(get(c, "/state")["state"]["player"]["current_index"] == 2);

    std::vector<json> ev = read_stream(port, id);
    REQUIRE(!ev.empty());
    for (std::size_t i = 0; i < ev.size(); ++i) {
        CHECK(ev[i]["seq"] == static_cast<int>(i) + 1);
        CHECK(ev[i]["session_id"] == id);
    }
    CHECK(ev.front()["kind"] == "status_changed");
    CHECK(ev[1]["kind"] == "iteration_started");
    CHECK(ev.back()["kind"] == "status_changed");
    CHECK(ev.back()["payload"]["status"] == "succeeded");
    std::vector<json> tail = read_stream(port, id, "?from=3");
    CHECK(tail.front()["seq"] == 3);
    CHECK(tail.size() == ev.size() - 2);

    json list = get(c, "/sessions");
    CHECK(list.size() == 1);
    CHECK(get(c, "/audit?session=" + id).size() == 1);
    auto ui = c.Get("/ui/index.html");
    REQUIRE(ui);
    CHECK(ui->status == 200);
}

TEST_CASE("request validation and error statuses") {
    TempDir dir;
    Service svc(config(dir), table_file("table2_oracle.json"));
    auto c = client(svc.start());
    post(c, "/sessions", {{"instruction", ""}}, 400);
    post(c, "/sessions", {{"instruction", "   "}}, 400);
    post(c, "/sessions", json::object(), 400);
    auto bad = c.Post("/sessions", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    post(c, "/sessions", {{"instruction", "x"}, {"fixture", "nowhere"}}, 400);
    post(c, "/sessions", {{"instruction", "x"}, {"max_iterations", 0}}, 400);
    post(c, "/sessions", {{"instruction", "x"}, {"rules", "lenient"}}, 400);
    get(c, "/sessions/nope", 404);
    auto ev = c.Get("/sessions/nope/events");
    REQUIRE(ev);
    CHECK(ev->status == 404);
    post(c, "/sessions/nope/approve", {{"grant", true}}, 404);
    post(c, "/sessions/nope/feedback", {{"text", "x"}}, 404);
    post(c, "/sessions/nope/rollback", json::object(), 404);
    post(c, "/execute", {{"code", "1"}}, 403);

    std::string id = post(c, "/sessions", {{"instruction", "Play the next song"}}, 201)["id"];
    svc.drain();
    post(c, "/sessions/" + id + "/approve", {{"grant", true}}, 409);
    post(c, "/sessions/" + id + "/approve", {{"grant", "yes"}}, 400);
    post(c, "/sessions/" + id + "/feedback", {{"text", "x"}}, 409);
    post(c, "/sessions/" + id + "/rollback", {{"snapshot_id", 999999}}, 404);
}

TEST_CASE("one live-host session at a time; approval releases it") {
    TempDir dir;
    Service svc(config(dir, "three-tabs", true), table_file("table2_oracle.json"));
    auto c = client(svc.start());

    std::string first = post(c, "/sessions", {{"instruction", "Close all other tabs"}}, 201)["id"];
    svc.drain();
    CHECK(status_of(c, first) == "awaiting_approval");
    CHECK(get(c, "/state")["owner"] == first);
    post(c, "/sessions", {{"instruction", "Play the next song"}}, 409);
    post(c, "/execute", {{"code", "console.log(1)"}}, 409);
    std::string iso = post(c, "/sessions", {{"instruction", "Play the next song"}, {"fixture", "default"}}, 201)["id"];
    svc.drain();
    CHECK(status_of(c, iso) == "succeeded");
    CHECK(get(c, "/state")["state"]["player"]["current_index"] == host::to_json(host::init_fixture("three-tabs"))["player"]["current_index"]);

    post(c, "/sessions/" + first + "/approve", {{"grant", true}}, 202);
    svc.drain();
    CHECK(status_of(c, first) == "succeeded");
    CHECK(get(c, "/state")["state"]["editor"]["tabs"].size() == 1);
    CHECK(get(c, "/state")["owner"].is_null());
    post(c, "/sessions", {{"instruction", "Play the next song"}}, 201);
    svc.drain();
}

TEST_CASE("declining an approval keeps the host unchanged") {
    TempDir dir;
    Service svc(config(dir, "three-tabs"), table_file("table2_oracle.json"));
    auto c = client(svc.start());
    std::string before = get(c, "/state")["state_hash"];
    std::string id = post(c, "/sessions", {{"instruction", "Close all other tabs"}, {"max_iterations", 1}}, 201)["id"];
    svc.drain();
    post(c, "/sessions/" + id + "/approve", {{"grant", false}}, 202);
    svc.drain();
    CHECK(status_of(c, id) == "failed");
    CHECK(get(c, "/state")["state_hash"] == before);
}

TEST_CASE("streams joined at random moments are gapless") {
    TempDir dir;
    json t = json::parse(read_file(data("scripts/listing1.json")));
    Service svc(config(dir), std::make_shared<Slow>(table(t), std::chrono::milliseconds(40)));
    int port = svc.start();
    auto c = client(port);
    std::string id = post(c, "/sessions", {{"instruction", "increase the volume slightly"}}, 201)["id"];

    std::mt19937 rng(3);
    std::vector<std::vector<json>> seen(6);
    std::vector<std::thread> subs;
    for (std::size_t i = 0; i < seen.size(); ++i) {
        int delay = static_cast<int>(rng() % 200);
        subs.emplace_back([&, i, delay] {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            seen[i] = read_stream(port, id);
        });
    }
    for (auto& th : subs) th.join();
    svc.drain();
    CHECK(status_of(c, id) == "succeeded");
    std::vector<json> full = read_stream(port, id);
    for (const auto& s : seen) {
        REQUIRE(s.size() == full.size());
        for (std::size_t k = 0; k < s.size(); ++k) CHECK(s[k] == full[k]);
    }
    int iterations = 0;
    for (const auto& e : full) iterations += e["kind"] == "iteration_started";
    CHECK(iterations == 3);
}

TEST_CASE("raw execution goes through analysis, guard and audit") {
    TempDir dir;
    Service svc(config(dir, "default", true), table_file("table2_oracle.json"));
    auto c = client(svc.start());
    json ok = post(c, "/execute", {{"code", "console.log(app.player.volume)"}}, 200);
    CHECK(ok["result"]["status"] == "ok");
    CHECK(ok["result"]["console"] == json::array({"0.5"}));

    std::string before = get(c, "/state")["state_hash"];
    json denied = post(c, "/execute", {{"code", "app.player.volume = 0.9; fetch('http://example.com')"}}, 200);
    CHECK(denied["verdict"]["decision"] == "Deny");
    CHECK(denied["result"]["status"] == "denied");
    CHECK(get(c, "/state")["state_hash"] == before);

    json approval = post(c, "/execute", {{"code", "app.editor.closeOtherTabs()"}}, 200);
    CHECK(approval["verdict"]["decision"] == "NeedsApproval");
    CHECK(approval["result"]["status"] == "denied");

    json wrote = post(c, "/execute", {{"code", "app.player.volume = 0.7"}}, 200);
    CHECK(wrote["result"]["status"] == "ok");
    CHECK(get(c, "/state")["state"]["player"]["volume"] == 0.7);

    json audit = get(c, "/audit?session=raw");
    REQUIRE(audit.size() == 4);
    for (const auto& e : audit) CHECK(e["tag"] == "raw");
    CHECK(audit[1]["result_status"] == "not_executed");
    bool volume_logged = false;
    for (const auto& d : audit[3]["state_diff"]) volume_logged |= d["path"] == "player/volume" && d["after"] == 0.7;
    CHECK(volume_logged);
}

TEST_CASE("user feedback resumes a possible salient failure") {
    TempDir dir;
    json t = {{"entries",
               {{{"when", {{"purpose", "verification"}, {"iteration", 1}}}, {"response", reply("console.log('VERIFY:FAIL')")}},
                {{"when", {{"purpose", "verification"}}}, {"response", reply("console.log(app.ui.currentRoute === 'library/history' ? 'VERIFY:PASS' : 'VERIFY:FAIL')")}},
                {{"when", {{"iteration", 1}}}, {"response", reply("app.ui.navigate('library')")}},
                {{"when", {{"iteration", 2}}}, {"response", reply("app.ui.navigate('library/history')")}}}}};
    Service svc(config(dir), table(t));
    auto c = client(svc.start());
    std::string id = post(c, "/sessions", {{"instruction", "Show my listening history"}}, 201)["id"];
    svc.drain();
    CHECK(status_of(c, id) == "awaiting_user");
    post(c, "/sessions/" + id + "/feedback", {{"text", "this is the library, not the history"}, {"accomplished", false}}, 202);
    svc.drain();
    json s = get(c, "/sessions/" + id);
    CHECK(s["status"] == "succeeded");
    CHECK(s["iterations"].size() == 2);
    CHECK(s["state"]["current_route"] == "library/history");
}

TEST_CASE("rollback restores the pre-session state and is audited") {
    TempDir dir;
    Service svc(config(dir), table_file("table2_oracle.json"));
    auto c = client(svc.start());
    std::string golden = get(c, "/state")["state_hash"];
    std::string id = post(c, "/sessions", {{"instruction", "Increase the font size by 2"}}, 201)["id"];
    svc.drain();
    CHECK(get(c, "/state")["state_hash"] != golden);
    json r = post(c, "/sessions/" + id + "/rollback", json::object(), 200);
    CHECK(r["state_hash"] == golden);
    CHECK(get(c, "/state")["state_hash"] == golden);
    json audit = get(c, "/audit?session=" + id);
    CHECK(audit.back()["result_status"] == "rolled_back");
}

TEST_CASE("every network-reachable mutation is explained by the audit log") {
    TempDir dir;
    json t = json::parse(read_file(data("scripts/table2_oracle.json")));
    json extra = {{{"when", {{"instruction", "salient demo"}, {"purpose", "verification"}}}, {"response", reply("console.log('VERIFY:FAIL')")}},
                  {{"when", {{"instruction", "salient demo"}}}, {"response", reply("app.player.volume = 0.55")}}};
    for (const auto& e : t["entries"]) extra.push_back(e);
    t["entries"] = extra;
    Service svc(config(dir, "three-tabs", true), table(t));
    auto c = client(svc.start());
    std::set<std::string> exercised;
    std::set<std::string> isolated;

    auto audit_now = [&] { return get(c, "/audit"); };
    auto state_now = [&] { return host::from_json(get(c, "/state")["state"]); };
    // Runs a call, then checks that replaying the new live-host audit diffs
    // over the old state yields the new state.
    auto mutate = [&](const std::string& route, const std::function<void()>& call) {
        exercised.insert(route);
        host::HostState before = state_now();
        std::size_t seen = audit_now().size();
        call();
        svc.drain();
        host::HostState after = state_now();
        json audit = audit_now();
        host::HostState replay = before;
        for (std::size_t i = seen; i < audit.size(); ++i) {
            if (isolated.count(audit[i]["session_id"].get<std::string>()) > 0) continue;
            replay = host::apply_diff(replay, host::diff_from_json(audit[i]["state_diff"]));
        }
        CHECK(replay == after);
    };

    std::string paused;
    mutate("POST /sessions", [&] { paused = post(c, "/sessions", {{"instruction", "Close all other tabs"}}, 201)["id"]; });
    mutate("POST /sessions/{id}/approve", [&] { post(c, "/sessions/" + paused + "/approve", {{"grant", true}}, 202); });
    mutate("POST /sessions/{id}/rollback", [&] { post(c, "/sessions/" + paused + "/rollback", json::object(), 200); });
    mutate("POST /execute", [&] { post(c, "/execute", {{"code", "app.editor.fontSize = 20"}}, 200); });
    mutate("POST /sessions", [&] {
        std::string id = post(c, "/sessions", {{"instruction", "Play the next song"}, {"fixture", "default"}}, 201)["id"];
        isolated.insert(id);
    });

    std::string salient;
    mutate("POST /sessions", [&] { salient = post(c, "/sessions", {{"instruction", "salient demo"}}, 201)["id"]; });
    CHECK(status_of(c, salient) == "awaiting_user");
    mutate("POST /sessions/{id}/feedback", [&] {
        post(c, "/sessions/" + salient + "/feedback", {{"text", "looks right"}, {"accomplished", true}}, 202);
    });

    for (const std::string& read : {"GET /sessions", "GET /sessions/{id}", "GET /sessions/{id}/events", "GET /state", "GET /audit", "GET /ui"})
        exercised.insert(read);
    get(c, "/sessions");
    get(c, "/sessions/" + paused);
    read_stream(svc.port(), paused);
    for (const RouteInfo& r : Service::routes()) {
        INFO(r.method << " " << r.pattern);
        CHECK(exercised.count(r.method + " " + r.pattern) == 1);
    }
}

TEST_CASE("restart marks interrupted sessions failed and keeps them recoverable") {
    TempDir dir;
    json t = {{"entries",
               {{{"when", {{"iteration", 1}}}, {"response", reply("app.player.volume = 0.8;\napp.player.next();", false)}},
                {{"when", {{"iteration", 2}}}, {"response", reply("app.editor.closeOtherTabs();")}}}}};
    std::string id;
    std::string golden = host::state_hash(host::init_fixture("three-tabs"));
    json audit_before;
    {
        Service svc(config(dir, "three-tabs"), table(t));
        auto c = client(svc.start());
        id = post(c, "/sessions", {{"instruction", "tidy up"}}, 201)["id"];
        svc.drain();
        CHECK(status_of(c, id) == "awaiting_approval");
        CHECK(get(c, "/state")["state_hash"] != golden);
        audit_before = get(c, "/audit");
    }
    Service svc(config(dir, "three-tabs"), table(t));
    auto c = client(svc.start());
    json s = get(c, "/sessions/" + id);
    CHECK(s["status"] == "failed");
    CHECK(s["outcome"].get<std::string>().find("restarted") != std::string::npos);
    json audit_after = get(c, "/audit");
    REQUIRE(audit_after.size() >= audit_before.size());
    for (std::size_t i = 0; i < audit_before.size(); ++i) CHECK(audit_after[i] == audit_before[i]);
    std::vector<json> ev = read_stream(svc.port(), id);
    CHECK(ev.back()["payload"]["status"] == "failed");
    CHECK(get(c, "/state")["owner"].is_null());

    json r = post(c, "/sessions/" + id + "/rollback", json::object(), 200);
    CHECK(r["state_hash"] == golden);
    CHECK(get(c, "/state")["state_hash"] == golden);
    post(c, "/sessions", {{"instruction", "Play the next song"}}, 201);
}
