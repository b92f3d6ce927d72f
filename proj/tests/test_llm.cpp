#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "jitagent/common.hpp"
#include "jitagent/llm/provider.hpp"
#include "test_util.hpp"

using namespace jitagent;
using namespace jitagent::llm;
using nlohmann::json;

namespace {

ChatRequest request_for(const std::string& instruction, int iteration, const std::string& last_error = "") {
    ChatRequest r;
    r.system = "sys";
    r.messages = {{"user", "prompt for " + instruction + " #" + std::to_string(iteration) + last_error}};
    r.model_name = "test-model";
    r.context.instruction = instruction;
    r.context.iteration = iteration;
    r.context.last_error = last_error;
    return r;
}

// Local chat-completion stand-in that answers from a status script.
class FakeEndpoint {
public:
    explicit FakeEndpoint(std::vector<int> statuses) : statuses_(std::move(statuses)) {
        auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            std::size_t n = calls_++;
            last_auth_ = req.get_header_value("Authorization") + req.get_header_value("x-api-key");
            last_body_ = req.body;
            int status = statuses_[std::min(n, statuses_.size() - 1)];
            res.status = status;
            if (status == 200) {
                if (req.path == "/v1/messages")
                    res.set_content(R"({"content":[{"type":"text","text":"hello "},{"type":"text","text":"world"}]})", "application/json");
                else
                    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hello world"}}]})", "application/json");
            } else {
                res.set_content("{\"error\":\"x\"}", "application/json");
            }
        };
        server_.Post("/v1/chat/completions", handler);
        server_.Post("/v1/messages", handler);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    std::size_t calls() const { return calls_; }
    const std::string& last_auth() const { return last_auth_; }
    const std::string& last_body() const { return last_body_; }

private:
    std::vector<int> statuses_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<std::size_t> calls_{0};
    std::string last_auth_, last_body_;
};

HttpConfig local(const std::string& url, int retries = 3) {
    HttpConfig c;
    c.endpoint = url;
    c.api_key_env = "JITAGENT_TEST_KEY";
    c.max_retries = retries;
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::seconds(5);
    return c;
}

}  // namespace

TEST_CASE("chat request validation") {
    ChatRequest r = request_for("x", 1);
    CHECK_NOTHROW(r.validate());
    r.temperature = -0.1;
    CHECK_THROWS_AS(r.validate(), DomainError);
    r.temperature = 0;
    r.messages = {{"user", "a"}, {"assistant", "b"}, {"assistant", "c"}};
    CHECK_THROWS_AS(r.validate(), DomainError);
    r.messages = {{"system", "a"}};
    CHECK_THROWS_AS(r.validate(), DomainError);
}

TEST_CASE("request digest ignores context hints") {
    ChatRequest a = request_for("x", 1);
    ChatRequest b = a;
    b.context.iteration = 7;
    CHECK(a.digest() == b.digest());
    b.messages[0].text += "!";
    CHECK(a.digest() != b.digest());
}

TEST_CASE("scripted provider is a first-match table lookup") {
    ScriptTable t = ScriptTable::from_json(json::parse(R"({"entries":[
        {"when":{"iteration":1},"response":"round one"},
        {"when":{"last_error":"volume"},"response":"round two"},
        {"when":{"last_error":"Player component not found"},"response":{"thinking":"t","action_code":"js:1","final_step":true}},
        {"when":{"purpose":"verification"},"response":"verify"},
        {"response":"fallback"}]})"));
    ScriptedProvider p(t);
    CHECK(p.complete(request_for("increase the volume slightly", 1)) == "round one");
    CHECK(p.complete(request_for("increase the volume slightly", 2, "TypeError: Cannot read property 'volume' of undefined")) == "round two");
    CHECK(json::parse(p.complete(request_for("increase", 3, "Error: Player component not found"))).at("final_step") == true);
    CHECK(p.complete(request_for("anything", 4)) == "fallback");
    ChatRequest v = request_for("anything", 4);
    v.context.purpose = "verification";
    CHECK(p.complete(v) == "verify");
    // Referential transparency.
    for (int i = 0; i < 5; ++i) CHECK(p.complete(request_for("increase", 2, "volume")) == "round two");
    CHECK(ScriptTable::from_json(t.to_json()).to_json() == t.to_json());

    ScriptedProvider empty(ScriptTable{});
    CHECK_THROWS_AS(empty.complete(request_for("x", 1)), NoMatch);
    CHECK_THROWS_AS(ScriptTable::from_json(json::parse(R"({"entries":[{"when":{"colour":"red"},"response":"x"}]})")), ParseError);
    CHECK_THROWS_AS(ScriptTable::from_json(json::parse(R"({"rows":[]})")), ParseError);
}

TEST_CASE("http provider retries transient failures only") {
    setenv("JITAGENT_TEST_KEY", "secret-token", 1);
    SUBCASE("recovers after two server errors") {
        FakeEndpoint ep({500, 503, 200});
        HttpChatProvider p(local(ep.url()));
        CHECK(p.complete(request_for("x", 1)) == "hello world");
        CHECK(ep.calls() == 3);
        CHECK(ep.last_auth() == "Bearer secret-token");
        json body = json::parse(ep.last_body());
        CHECK(body.at("model") == "test-model");
        CHECK(body.at("messages").at(0).at("role") == "system");
    }
    SUBCASE("gives up after the configured retries") {
        FakeEndpoint ep({503});
        HttpChatProvider p(local(ep.url(), 2));
        CHECK_THROWS_AS(p.complete(request_for("x", 1)), TransportError);
        CHECK(ep.calls() == 3);
    }
    SUBCASE("auth rejections are not retried") {
        FakeEndpoint ep({401, 200});
        HttpChatProvider p(local(ep.url()));
        CHECK_THROWS_AS(p.complete(request_for("x", 1)), AuthError);
        CHECK(ep.calls() == 1);
    }
    SUBCASE("client errors are not retried") {
        FakeEndpoint ep({400, 200});
        HttpChatProvider p(local(ep.url()));
        CHECK_THROWS_AS(p.complete(request_for("x", 1)), TransportError);
        CHECK(ep.calls() == 1);
    }
    SUBCASE("anthropic wire") {
        FakeEndpoint ep({200});
        HttpConfig c = local(ep.url());
        c.wire = Wire::anthropic;
        HttpChatProvider p(c);
        CHECK(p.complete(request_for("x", 1)) == "hello world");
        CHECK(ep.last_auth() == "secret-token");
        CHECK(json::parse(ep.last_body()).at("system") == "sys");
    }
    SUBCASE("unreachable endpoint") {
        int port;
        {
            FakeEndpoint ep({200});
            port = std::stoi(ep.url().substr(ep.url().rfind(':') + 1));
        }
        HttpChatProvider p(local("http://127.0.0.1:" + std::to_string(port), 1));
        CHECK_THROWS_AS(p.complete(request_for("x", 1)), TransportError);
    }
    SUBCASE("missing credential") {
        HttpConfig c = local("http://127.0.0.1:1");
        c.api_key_env = "JITAGENT_TEST_KEY_UNSET";
        unsetenv("JITAGENT_TEST_KEY_UNSET");
        CHECK_THROWS_AS(HttpChatProvider(c).complete(request_for("x", 1)), AuthError);
    }
}

TEST_CASE("cassettes record once and replay bit-exactly") {
    TempDir dir;
    auto inner = std::make_shared<ScriptedProvider>(ScriptTable::from_json(json::parse(
        R"({"entries":[{"when":{"iteration":1},"response":"first é answer\n"},{"response":"later"}]})")));
    CassetteProvider recorder(dir.path(), CassetteMode::record, inner);
    ChatRequest a = request_for("x", 1), b = request_for("x", 2);
    std::string ra = recorder.complete(a), rb = recorder.complete(b);
    CHECK(std::filesystem::exists(dir.path() / (a.digest() + ".json")));

    CassetteProvider replay(dir.path(), CassetteMode::replay);
    CHECK(replay.complete(a) == ra);
    CHECK(replay.complete(b) == rb);
    CHECK_THROWS_AS(replay.complete(request_for("unseen", 1)), CassetteMiss);
    CHECK_THROWS_AS(CassetteProvider(dir.path(), CassetteMode::record), ConfigError);
}

TEST_CASE("call budget") {
    CallBudget budget(10);
    for (int i = 0; i < 10; ++i) budget.charge();
    CHECK(budget.used() == 10);
    CHECK_THROWS_AS(budget.charge(), BudgetExceeded);
}

TEST_CASE("provider configuration") {
    CHECK_THROWS_AS(make_provider({.name = "mystery"}), ConfigError);
    CHECK_THROWS_AS(make_provider({.name = "scripted", .script_table = "/nonexistent.json"}), ConfigError);
    ProviderConfig replay_only{.name = "scripted", .cassette_dir = "/tmp", .cassette_mode = CassetteMode::replay};
    CHECK(make_provider(replay_only) != nullptr);
    CHECK(make_provider({.name = "openai"})->name() == "openai");
}
