#include "doctest.h"

#include <random>

#include "jitagent/agent/agent.hpp"
#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"
#include "test_util.hpp"

using namespace jitagent;
using namespace jitagent::agent;
using nlohmann::json;

namespace {

std::string data(const std::string& rel) { return std::string(JITAGENT_DATA_DIR) + "/" + rel; }

// Scripted provider that keeps every request it saw.
class Recorder : public llm::Provider {
public:
    explicit Recorder(llm::ScriptTable t) : inner_(std::move(t)) {}
    std::string complete(const llm::ChatRequest& r) override {
        requests.push_back(r);
        return inner_.complete(r);
    }
    std::string name() const override { return "recorder"; }
    std::vector<llm::ChatRequest> requests;

private:
    llm::ScriptedProvider inner_;
};

std::shared_ptr<Recorder> recorder_file(const std::string& table_file) {
    return std::make_shared<Recorder>(llm::ScriptTable::load(data("scripts/" + table_file)));
}

std::shared_ptr<Recorder> recorder(const json& table) { return std::make_shared<Recorder>(llm::ScriptTable::from_json(table)); }

json reply(const std::string& code, bool final = true, const std::string& thinking = "t") {
    return {{"thinking", thinking}, {"action_code", "js:" + code}, {"final_step", final}};
}

json strip_volatile(json j) {
    if (j.is_object()) {
        j.erase("created_at");
        j.erase("duration_ms");
        for (auto& [k, v] : j.items()) v = strip_volatile(v);
    } else if (j.is_array()) {
        for (auto& v : j) v = strip_volatile(v);
    }
    return j;
}

std::string random_text(std::mt19937& rng, std::size_t max_len) {
    static const std::vector<std::string> pieces = {"a", "Z", " ", "\n", "\t", "\"", "\\", "{", "}", "[", "]", ":", ",", "é", "→",
                                                    "js:", "N/A:", "```", "'", "0", "true", "\u0001", "/", "<", ">"};
    std::string s;
    std::size_t n = rng() % (max_len + 1);
    for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
    return s;
}

}  // namespace

TEST_CASE("parse_response examples") {
    auto r = parse_response(R"J({"thinking":"advance queue","action_code":"js:app.player.next()","final_step":true})J");
    REQUIRE(r.has_code());
    CHECK(r.code() == sandbox::ActionCode::js("app.player.next()"));
    CHECK(r.final_step);
    CHECK(r.thinking == "advance queue");

    auto na = parse_response(R"J({"thinking":"impossible","action_code":"N/A:no such feature","final_step":true})J");
    REQUIRE_FALSE(na.has_code());
    CHECK(na.not_possible().reasons == "no such feature");

    auto fenced = parse_response("```json\n{\"thinking\":\"advance queue\",\"action_code\":\"js:app.player.next()\",\"final_step\":true}\n```");
    CHECK(fenced == r);
    auto prose = parse_response("Sure! Here is the answer:\n{\"thinking\":\"advance queue\",\"action_code\":\"js:app.player.next()\",\"final_step\":true}\nLet me know {if} that helps.");
    CHECK(prose == r);

    // N/A answers may leave out the thinking key.
    CHECK(parse_response(R"J({"action_code": "N/A:offline", "final_step": true})J").not_possible().reasons == "offline");
    // Literal newlines inside strings.
    CHECK(parse_response("{\"thinking\":\"x\",\"action_code\":\"js:a();\nb();\",\"final_step\":false}").code().source == "a();\nb();");
    CHECK(parse_response(R"J({"thinking":"x","action_code":"js:1","final_step":"true"})J").final_step);

    CHECK_THROWS_AS(parse_response("no json here"), ParseError);
    CHECK_THROWS_AS(parse_response(R"J({"thinking":"x","final_step":true})J"), ParseError);
    CHECK_THROWS_AS(parse_response(R"J({"thinking":"x","action_code":"js:1"})J"), ParseError);
    CHECK_THROWS_AS(parse_response(R"J({"thinking":"x","action_code":"py:print(1)","final_step":true})J"), ParseError);
    CHECK_THROWS_AS(parse_response(R"J({"thinking":"x","action_code":"js:1","final_step":"Y"})J"), ParseError);
    CHECK_THROWS_AS(parse_response(R"J({"thinking":"x","action_code":"js:1","final_step":1})J"), ParseError);
    CHECK_THROWS_AS(parse_response(R"J({"action_code":"js:1","final_step":true})J"), ParseError);
}

TEST_CASE("property: protocol round trip over generated responses") {
    std::mt19937 rng(2024);
    int checked = 0;
    for (int i = 0; i < 1500; ++i) {
        AgentResponse r;
        r.thinking = random_text(rng, 40);
        if (rng() % 4 == 0) r.action = NotPossible{random_text(rng, 30)};
        else r.action = sandbox::ActionCode::js(random_text(rng, 80));
        r.final_step = rng() % 2 == 0;
        const std::string canonical = r.serialize();
        AgentResponse back = parse_response(canonical);
        CHECK(back == r);
        CHECK(back.serialize() == canonical);
        CHECK(parse_response("```json\n" + canonical + "\n```") == r);
        CHECK(parse_response("Here you go.\n" + canonical + "\nThat should work.") == r);
        CHECK(parse_response(r.to_json().dump(2)) == r);
        ++checked;
    }
    CHECK(checked >= 1000);
}

TEST_CASE("prompt layout") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    Agent agent({}, recorder_file("listing1.json"), store);
    Session s = agent.start("p1", "Play the next song", host::init_fixture("default"));
    auto snippets = context::surface_index().retrieve(s.instruction);
    std::string p = build_prompt(s, snippets);
    CHECK(p == build_prompt(s, snippets));
    CHECK(p.find("<HISTORY>\n\n</HISTORY>") != std::string::npos);
    CHECK(p.ends_with("\"Play the next song\"\n"));
    std::size_t app = p.find("music player"), service = p.find("`app`"), ctx = p.find("app.player.next"),
                fmt = p.find("<FORMAT>"), hist = p.find("<HISTORY>"), task = p.rfind("Play the next song");
    CHECK(app < service);
    CHECK(service < ctx);
    CHECK(ctx < fmt);
    CHECK(fmt < hist);
    CHECK(hist < task);
    CHECK(read_file(data("prompt_template.txt")) == prompt_template());
    CHECK(read_file(data("verification_template.txt")) == verification_template());
}

TEST_CASE("history budget summarizes the oldest rounds first") {
    std::vector<IterationRecord> rounds;
    for (int i = 1; i <= 6; ++i) {
        IterationRecord r;
        r.index = i;
        r.response = parse_response(reply("console.log('" + std::string(500, 'x') + "'); boom" + std::to_string(i) + "()", false).dump());
        sandbox::ExecutionResult res;
        res.status = sandbox::Status::runtime_error;
        res.error = sandbox::ErrorReport{sandbox::ErrorKind::reference_error, "boom" + std::to_string(i) + " is not defined", "ReferenceError"};
        r.result = res;
        rounds.push_back(r);
    }
    std::string full = render_history(rounds, 1'000'000);
    for (int i = 1; i <= 6; ++i) CHECK(full.find("boom" + std::to_string(i) + " is not defined") != std::string::npos);

    std::string cut = render_history(rounds, 2000);
    CHECK(cut.size() <= 2000);
    CHECK(cut.find("Round 1 (summarized): status runtime_error, error kind ReferenceError-like") != std::string::npos);
    CHECK(cut.find("boom6 is not defined") != std::string::npos);
    CHECK(cut.find("boom1 is not defined") == std::string::npos);
    // Verbatim rounds are always a suffix.
    bool seen_verbatim = false;
    for (int i = 1; i <= 6; ++i) {
        bool summarized = cut.find("Round " + std::to_string(i) + " (summarized)") != std::string::npos;
        if (!summarized) seen_verbatim = true;
        CHECK_FALSE((seen_verbatim && summarized));
    }
    // The newest round stays verbatim even when it alone exceeds the budget.
    std::string tiny = render_history(rounds, 10);
    CHECK(tiny.find("boom6 is not defined") != std::string::npos);
    CHECK(tiny.find("Round 5 (summarized)") != std::string::npos);
}

TEST_CASE("Listing-1 trajectory succeeds on the third round") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto provider = recorder_file("listing1.json");
    Agent agent({}, provider, store);
    Session s = agent.start("l1", "increase the volume slightly", host::init_fixture("default"));
    agent.run(s);
    CHECK(s.status == SessionStatus::succeeded);
    REQUIRE(s.iterations.size() == 3);
    const auto& r1 = *s.iterations[0].result;
    CHECK(r1.status == sandbox::Status::runtime_error);
    CHECK((r1.error->kind == sandbox::ErrorKind::type_error || r1.error->kind == sandbox::ErrorKind::reference_error));
    CHECK(r1.error->message.find("volume") != std::string::npos);
    CHECK(s.iterations[1].result->error->kind == sandbox::ErrorKind::thrown_value);
    CHECK(s.iterations[1].result->error->message.find("Player component not found") != std::string::npos);
    CHECK(s.iterations[2].result->ok());
    CHECK(s.state.player.volume == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(s.iterations[2].verification->passed);

    // Every round's prompt carries the earlier rounds' status and error text.
    std::vector<std::string> action_prompts;
    for (const auto& r : provider->requests)
        if (r.context.purpose == "action") action_prompts.push_back(r.messages[0].text);
    REQUIRE(action_prompts.size() == 3);
    for (std::size_t k = 1; k < 3; ++k)
        for (std::size_t j = 0; j < k; ++j) {
            CHECK(action_prompts[k].find("status: runtime_error") != std::string::npos);
            CHECK(action_prompts[k].find(s.iterations[j].result->error->display()) != std::string::npos);
            CHECK(action_prompts[k].find(s.iterations[j].response->serialize()) != std::string::npos);
        }

    auto audit = store.query_audit({"l1", {}, {}});
    CHECK(audit.size() == 3);
    CHECK(audit[0].result_status == "runtime_error");
    CHECK(audit[2].result_status == "ok");
}

TEST_CASE("sessions are byte-reproducible with a scripted provider") {
    auto once = [] {
        TempDir dir;
        statekeeper::Store store(dir.path());
        Agent agent({}, recorder_file("listing1.json"), store);
        Session s = agent.start("rep", "increase the volume slightly", host::init_fixture("default"));
        agent.run(s);
        return strip_volatile(to_json(s)).dump();
    };
    CHECK(once() == once());
}

TEST_CASE("not possible ends the session") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    Agent agent({}, recorder_file("always_na.json"), store);
    Session s = agent.start("na", "Fly to the moon", host::init_fixture("default"));
    agent.run(s);
    CHECK(s.status == SessionStatus::failed);
    CHECK(s.outcome.find("never attempts") != std::string::npos);
    CHECK(s.iterations.size() == 1);
    CHECK_FALSE(s.iterations[0].result);
}

TEST_CASE("approval gate") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto table = json{{"entries", json::array({
        {{"when", {{"iteration", 1}}}, {"response", reply("app.editor.closeOtherTabs();")}},
        {{"when", {{"purpose", "verification"}}}, {"response", reply("console.log(app.editor.tabs.length === 1 ? 'VERIFY:PASS' : 'VERIFY:FAIL')")}},
        {{"response", reply("console.log('gave up')", false)}}})}};
    host::HostState initial = host::init_fixture("three-tabs");
    std::vector<std::string> events;

    SUBCASE("grant executes the pending code") {
        Agent agent({}, recorder(table), store);
        Session s = agent.start("ap1", "Close all other tabs", initial);
        s.on_event = [&](const std::string& kind, const json&) { events.push_back(kind); };
        agent.run(s);
        CHECK(s.status == SessionStatus::awaiting_approval);
        CHECK_FALSE(s.iterations.back().result);
        CHECK(host::state_hash(s.state) == host::state_hash(initial));
        CHECK_THROWS_AS(agent.step(s), WrongState);
        agent.incorporate_feedback(s, ApprovalDecision{true});
        CHECK(s.state.editor.tabs.size() == 1);
        CHECK(s.status == SessionStatus::succeeded);
        CHECK(events == std::vector<std::string>{"iteration_started", "response_parsed", "verdict", "status_changed",
                                                 "status_changed", "execution_result", "execution_result", "status_changed"});
    }
    SUBCASE("denial enters the history") {
        auto provider = recorder(table);
        AgentConfig cfg;
        cfg.max_iterations = 2;
        Agent agent(cfg, provider, store);
        Session s = agent.start("ap2", "Close all other tabs", initial);
        agent.run(s);
        agent.incorporate_feedback(s, ApprovalDecision{false});
        CHECK(s.status == SessionStatus::running);
        CHECK(host::state_hash(s.state) == host::state_hash(initial));
        agent.run(s);
        CHECK(provider->requests.back().messages[0].text.find("declined to approve") != std::string::npos);
        CHECK(s.status == SessionStatus::failed);
        CHECK(s.iterations.size() == 2);
    }
    SUBCASE("auto-approve") {
        AgentConfig cfg;
        cfg.auto_approve = true;
        Agent agent(cfg, recorder(table), store);
        Session s = agent.start("ap3", "Close all other tabs", initial);
        agent.run(s);
        CHECK(s.status == SessionStatus::succeeded);
        CHECK(s.iterations[0].approval == true);
    }
}

TEST_CASE("salient failure pauses for the user") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto table = json{{"entries", json::array({
        {{"when", {{"purpose", "verification"}}}, {"response", reply("console.log(app.ui.currentRoute === 'library/history' ? 'VERIFY:PASS' : 'VERIFY:FAIL')")}},
        {{"when", {{"iteration", 1}}}, {"response", reply("app.ui.navigate('library');")}},
        {{"response", reply("app.ui.navigate('library/history');")}}})}};
    auto provider = recorder(table);
    Agent agent({}, provider, store);
    Session s = agent.start("sf", "show my listening history", host::init_fixture("default"));
    agent.run(s);
    CHECK(s.status == SessionStatus::awaiting_user);
    CHECK_FALSE(s.iterations[0].verification->passed);
    agent.incorporate_feedback(s, UserFeedback{"that opened the wrong view", false});
    CHECK(s.status == SessionStatus::running);
    agent.run(s);
    CHECK(provider->requests[2].messages[0].text.find("that opened the wrong view") != std::string::npos);
    CHECK(provider->requests[2].context.last_error.find("wrong view") != std::string::npos);
    CHECK(s.status == SessionStatus::succeeded);
    CHECK(s.state.current_route == "library/history");
    CHECK_THROWS_AS(agent.incorporate_feedback(s, UserFeedback{"thanks", true}), WrongState);

    Session t = agent.start("sf2", "show my listening history", host::init_fixture("default"));
    AgentConfig cfg;
    Agent agent2(cfg, recorder(table), store);
    agent2.run(t);
    agent2.incorporate_feedback(t, UserFeedback{"", true});
    CHECK(t.status == SessionStatus::succeeded);
}

TEST_CASE("verification that writes is blocked and counts as false") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto table = json{{"entries", json::array({
        {{"when", {{"purpose", "verification"}}}, {"response", reply("app.editor.fontSize = 16; console.log('VERIFY:PASS')")}},
        {{"response", reply("app.editor.fontSize = app.editor.fontSize + 2;")}}})}};
    Agent agent({}, recorder(table), store);
    Session s = agent.start("vw", "Increase the font size by 2", host::init_fixture("default"));
    agent.run(s);
    CHECK(s.status == SessionStatus::awaiting_user);
    CHECK(s.iterations[0].verification->detail.find("blocked") != std::string::npos);
    CHECK(s.state.active_document().font_size == 16);
}

TEST_CASE("font task verified by a read-only script") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto table = json{{"entries", json::array({
        {{"when", {{"purpose", "verification"}}}, {"response", reply("console.log(app.editor.fontSize === 16 ? 'VERIFY:PASS' : 'VERIFY:FAIL')")}},
        {{"response", reply("app.editor.fontSize = app.editor.fontSize + 2;")}}})}};
    Agent agent({}, recorder(table), store);
    Session s = agent.start("vf", "Increase the font size by 2", host::init_fixture("default"));
    agent.run(s);
    CHECK(s.status == SessionStatus::succeeded);
    CHECK_FALSE(s.iterations[0].verification->code_hash.empty());
}

TEST_CASE("loop bound, budget and rollback on failure") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto failing = json{{"entries", json::array({{{"response", reply("app.player.next(); missing.call();")}}})}};
    host::HostState initial = host::init_fixture("default");

    Agent agent({}, recorder(failing), store);
    Session s = agent.start("mx", "Play the next song", initial);
    agent.run(s);
    CHECK(s.status == SessionStatus::failed);
    CHECK(s.iterations.size() == 5);
    CHECK(s.state == initial);  // every round failed, so nothing committed

    auto mutating = json{{"entries", json::array({{{"response", reply("app.player.next();", false)}}})}};
    Agent keep({}, recorder(mutating), store);
    Session k = keep.start("keep", "Play the next song", initial);
    keep.run(k);
    CHECK(k.status == SessionStatus::failed);
    CHECK(k.state != initial);

    AgentConfig cfg;
    cfg.rollback_on_failure = true;
    Agent undo(cfg, recorder(mutating), store);
    Session u = undo.start("undo", "Play the next song", initial);
    undo.run(u);
    CHECK(u.status == SessionStatus::failed);
    CHECK(host::state_hash(u.state) == host::state_hash(initial));

    AgentConfig small;
    small.max_llm_calls = 3;
    Agent budget(small, recorder(mutating), store);
    Session b = budget.start("budget", "Play the next song", initial);
    budget.run(b);
    CHECK(b.status == SessionStatus::failed);
    CHECK(b.outcome.find("BudgetExceeded") != std::string::npos);
    CHECK(b.iterations.size() == 3);
}

TEST_CASE("parse errors and denials are fed back") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto table = json{{"entries", json::array({
        {{"when", {{"iteration", 1}}}, {"response", "I think you should press next."}},
        {{"when", {{"iteration", 2}}}, {"response", reply("fetch('http://example.com/steal')")}},
        {{"when", {{"purpose", "verification"}}}, {"response", reply("console.log('VERIFY:PASS')")}},
        {{"response", reply("app.player.next();")}}})}};
    auto provider = recorder(table);
    Agent agent({}, provider, store);
    host::HostState initial = host::init_fixture("default");
    Session s = agent.start("fb", "Play the next song", initial);
    agent.step(s);
    CHECK(s.iterations[0].parse_error);
    CHECK(s.status == SessionStatus::running);
    agent.step(s);
    CHECK(s.iterations[1].verdict->decision == safety::Decision::Deny);
    CHECK_FALSE(s.iterations[1].result);
    CHECK(s.state == initial);
    agent.run(s);
    CHECK(s.status == SessionStatus::succeeded);
    const std::string& p2 = provider->requests[1].messages[0].text;
    CHECK(p2.find("ParseError") != std::string::npos);
    CHECK(p2.find("I think you should press next.") != std::string::npos);
    const std::string& p3 = provider->requests[2].messages[0].text;
    CHECK(p3.find("denied (not run)") != std::string::npos);
    CHECK(p3.find("network access is not allowed") != std::string::npos);
}

TEST_CASE("explicit rollback") {
    TempDir dir;
    statekeeper::Store store(dir.path());
    auto table = json{{"entries", json::array({
        {{"when", {{"purpose", "verification"}}}, {"response", reply("console.log('VERIFY:FAIL')")}},
        {{"response", reply("app.player.volume = 0.1;")}}})}};
    Agent agent({}, recorder(table), store);
    host::HostState initial = host::init_fixture("default");
    Session s = agent.start("rb", "Increase the volume slightly", initial);
    agent.run(s);
    REQUIRE(s.status == SessionStatus::awaiting_user);
    CHECK(s.state.player.volume == doctest::Approx(0.1));
    agent.rollback(s);
    CHECK(s.status == SessionStatus::rolled_back);
    CHECK(s.state == initial);
    CHECK_THROWS_AS(agent.rollback(s, 424242), UnknownSnapshot);
    CHECK_THROWS_AS(agent.start("x", "   ", initial), DomainError);
}
