#include "doctest.h"

#include <random>
#include <thread>

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"
#include "jitagent/sandbox/sandbox.hpp"

using namespace jitagent;
using namespace jitagent::sandbox;
using host::HostState;
using nlohmann::json;

namespace {

std::pair<HostState, ExecutionResult> run(const std::string& src, const HostState& s, ResourceLimits limits = {},
                                          const Guard& guard = {}) {
    return execute(ActionCode::js(src), s, limits, guard);
}

json without_duration(const ExecutionResult& r) {
    json j = to_json(r);
    j.erase("duration_ms");
    return j;
}

// A bridge request together with equivalent action code.
struct Op {
    script::BridgeRequest request;
    std::string js;
};

Op random_op(std::mt19937& rng, const HostState& s) {
    std::uniform_int_distribution<int> pick(0, 7);
    std::uniform_real_distribution<double> real(0.0, 1.0);
    switch (pick(rng)) {
        case 0: {
            double v = std::round(real(rng) * 100) / 100;
            json arg = v;
            return {{"app.player.volume", script::AccessKind::write, {arg}}, "app.player.volume = " + arg.dump() + ";"};
        }
        case 1: return {{"app.player.next", script::AccessKind::invoke, {}}, "app.player.next();"};
        case 2: return {{"app.player.previous", script::AccessKind::invoke, {}}, "app.player.previous();"};
        case 3: {
            int size = 6 + static_cast<int>(real(rng) * 60);
            return {{"app.editor.fontSize", script::AccessKind::write, {size}}, "app.editor.fontSize = " + std::to_string(size) + ";"};
        }
        case 4: return {{"app.editor.openTab", script::AccessKind::invoke, {"x.md", json::array({"p"})}}, "app.editor.openTab('x.md', ['p']);"};
        case 5: {
            static const char* routes[] = {"home", "library", "library/history", "editor"};
            std::string r = routes[static_cast<std::size_t>(real(rng) * 4) % 4];
            return {{"app.ui.navigate", script::AccessKind::invoke, {r}}, "app.ui.navigate('" + r + "');"};
        }
        case 6: {
            json ps = json::array({"a", "b " + std::to_string(s.logical_clock)});
            return {{"app.editor.activeDocument.paragraphs", script::AccessKind::write, {ps}},
                    "app.editor.activeDocument.paragraphs = " + ps.dump() + ";"};
        }
        default: return {{"app.library.search", script::AccessKind::invoke, {"an"}}, "app.library.search('an');"};
    }
}

}  // namespace

TEST_CASE("action code tag, serialization and hash") {
    ActionCode c = ActionCode::parse("js:app.player.next()");
    CHECK(c.language_tag == "js");
    CHECK(c.source == "app.player.next()");
    CHECK(c.serialize() == "js:app.player.next()");
    CHECK(c.hash() == sha256_hex("js:app.player.next()"));
    CHECK(ActionCode::parse("js:a:b").source == "a:b");
    CHECK(c.hash() != ActionCode::js("app.player.next() ").hash());
    CHECK_THROWS_AS(ActionCode::parse("no tag here"), ParseError);
    CHECK_THROWS_AS(execute(ActionCode{"py", "print(1)"}, host::init_fixture("default"), {}), UnsupportedLanguage);
    ResourceLimits bad;
    bad.step_budget = 0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("volume script succeeds and records its diff") {
    HostState s = host::init_fixture("default");
    auto [after, r] = run("let v=Math.min(app.player.volume+0.1,1); app.player.volume=v; console.log('Volume increased to', v);", s);
    REQUIRE(r.status == Status::ok);
    CHECK_FALSE(r.error);
    CHECK(after.player.volume == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.console == std::vector<std::string>{"Volume increased to 0.6"});
    REQUIRE(r.state_diff.entries.size() == 2);
    CHECK(r.state_diff.entries[0].path == "logical_clock");
    CHECK(r.state_diff.entries[1].path == "player/volume");
    CHECK(host::apply_diff(s, r.state_diff) == after);
}

TEST_CASE("error normalization") {
    HostState s = host::init_fixture("default");
    SUBCASE("undefined binding") {
        auto [after, r] = run("let currentVolume = app.audio.volume;", s);
        CHECK(r.status == Status::runtime_error);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::type_error);
        CHECK(r.error->message.find("volume") != std::string::npos);
        CHECK(r.error->display().rfind("TypeError: Cannot read property 'volume' of undefined", 0) == 0);
    }
    SUBCASE("thrown error") {
        auto [after, r] = run("throw new Error('Player component not found')", s);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::thrown_value);
        CHECK(r.error->message == "Player component not found");
        CHECK(r.error->display() == "Error: Player component not found");
    }
    SUBCASE("thrown plain value") {
        auto [after, r] = run("throw 'nope'", s);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::thrown_value);
        CHECK(r.error->message == "nope");
    }
    SUBCASE("undefined variable") {
        auto [after, r] = run("vueInstance.player.volume", s);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::reference_error);
        CHECK(r.error->message.find("vueInstance") != std::string::npos);
    }
    SUBCASE("syntax error executes nothing") {
        auto [after, r] = run("app.player.next(); console.log('x'); let = ;", s);
        CHECK(r.status == Status::runtime_error);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::syntax_error);
        CHECK(r.console.empty());
        CHECK(after == s);
    }
    SUBCASE("guard denial") {
        auto [after, r] = run("app.player.next(); app.editor.closeOtherTabs();", s, {},
                              [](const script::BridgeRequest& q) -> std::optional<std::string> {
                                  if (q.path == "app.editor.closeOtherTabs") return "destructive";
                                  return std::nullopt;
                              });
        CHECK(r.status == Status::denied);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::guard_denied);
        CHECK(r.error->message == "destructive");
        CHECK(r.state_diff.empty());
        CHECK(after == s);
    }
}

TEST_CASE("resource limits stop runaway scripts without touching state") {
    HostState s = host::init_fixture("default");
    SUBCASE("step budget") {
        ResourceLimits lim;
        lim.step_budget = 1'000'000;
        auto [after, r] = run("app.player.next(); while(true){}", s, lim);
        CHECK((r.status == Status::resource_exhausted || r.status == Status::timeout));
        CHECK(r.error->kind == ErrorKind::limit_exceeded);
        CHECK(after == s);
    }
    SUBCASE("wall timeout") {
        ResourceLimits lim;
        lim.wall_timeout = std::chrono::milliseconds(150);
        lim.step_budget = ~0ULL >> 1;
        auto [after, r] = run("app.player.volume = 0.9; let i = 0; while (i < 1e8) { i++; }", s, lim);
        CHECK(r.status == Status::timeout);
        CHECK(r.duration_ms < 300);
        CHECK(after == s);
    }
    SUBCASE("output budget") {
        ResourceLimits lim;
        lim.output_budget = 100;
        auto [after, r] = run("for (let i = 0; i < 100; i++) console.log('line ' + i);", s, lim);
        CHECK(r.status == Status::resource_exhausted);
        CHECK(after == s);
    }
}

TEST_CASE("console order follows program order") {
    auto [after, r] = run("console.log(1); [2,3].forEach(x => console.log(x)); console.warn('w'); console.log('end')",
                          host::init_fixture("default"));
    CHECK(r.console == std::vector<std::string>{"1", "2", "3", "[warn] w", "end"});
}

TEST_CASE("scripts cannot reach capabilities outside the bridge") {
    HostState s = host::init_fixture("default");
    for (const char* src : {"fetch('http://example.com')", "require('fs')", "process.env.HOME", "Date.now()",
                            "setTimeout(() => {}, 1)", "new XMLHttpRequest()", "window.location", "document.cookie",
                            "globalThis.fetch", "eval('1')", "Function('return 1')()", "WebSocket", "localStorage",
                            "performance.now()"}) {
        CAPTURE(src);
        auto [after, r] = run(src, s);
        REQUIRE(r.error);
        CHECK(r.error->kind == ErrorKind::reference_error);
        CHECK(after == s);
    }
    for (const char* src : {"Math.random()", "app.constructor.constructor('return 1')()", "(() => {}).constructor('x')",
                            "app.__proto__.x", "app.ui.navigate.call(null, 'x')"}) {
        CAPTURE(src);
        auto [after, r] = run(src, s);
        CHECK(r.status != Status::ok);
        CHECK(after == s);
    }
}

TEST_CASE("property: execution is transactional and matches direct dispatch") {
    std::mt19937 rng(99);
    const std::vector<std::string> failures = {"throw new Error('boom');", "notDefined.x;", "null.y;", "while(true){}",
                                               "app.ui.navigate('nowhere');", "app.editor.closeTab('missing');"};
    ResourceLimits lim;
    lim.step_budget = 200'000;
    int ok_runs = 0, failed_runs = 0;
    for (int i = 0; i < 150; ++i) {
        HostState s = host::init_fixture(i % 3 == 0 ? "three-tabs" : "default");
        HostState expected = s;
        std::string src;
        int n = 1 + static_cast<int>(rng() % 6);
        bool inject = rng() % 2 == 0;
        int at = static_cast<int>(rng() % static_cast<unsigned>(n));
        for (int k = 0; k < n; ++k) {
            if (inject && k == at) src += failures[rng() % failures.size()] + "\n";
            Op op = random_op(rng, expected);
            host::dispatch_in_place(expected, op.request);
            src += op.js + "\n";
        }
        auto [after, r] = run(src, s, lim);
        CAPTURE(src);
        if (inject) {
            ++failed_runs;
            CHECK(r.status != Status::ok);
            CHECK(after == s);
            CHECK(r.state_diff.empty());
        } else {
            ++ok_runs;
            REQUIRE(r.status == Status::ok);
            CHECK(after == expected);
            CHECK(host::apply_diff(s, r.state_diff) == after);
            CHECK(host::diff(s, after) == r.state_diff);
        }
    }
    CHECK(ok_runs > 30);
    CHECK(failed_runs > 30);
}

TEST_CASE("same inputs give the same result") {
    HostState s = host::init_fixture("three-tabs");
    const std::string src = "const id = app.editor.openTab('n.md', app.editor.activeDocument.paragraphs.slice(0, 2));"
                            "console.log(id, JSON.stringify(app.editor.tabs)); app.editor.tabs.length";
    auto [a1, r1] = run(src, s);
    auto [a2, r2] = run(src, s);
    CHECK(a1 == a2);
    CHECK(without_duration(r1) == without_duration(r2));
    CHECK(r1.return_value == json(4));
}

TEST_CASE("execution results round-trip through JSON") {
    auto [after, r] = run("app.player.next(); null.x", host::init_fixture("default"));
    ExecutionResult back = execution_result_from_json(to_json(r));
    CHECK(to_json(back) == to_json(r));
    auto [after2, ok] = run("app.player.next(); 42", host::init_fixture("default"));
    CHECK(to_json(execution_result_from_json(to_json(ok))) == to_json(ok));
}

TEST_CASE("independent sandboxes run in parallel") {
    std::vector<std::thread> threads;
    std::vector<double> volumes(8);
    for (std::size_t i = 0; i < volumes.size(); ++i) {
        threads.emplace_back([i, &volumes] {
            HostState s = host::init_fixture("default");
            for (int k = 0; k < 20; ++k)
                s = run("app.player.volume = app.player.volume + 0.01 * " + std::to_string(i % 3), s).first;
            volumes[i] = s.player.volume;
        });
    }
    for (auto& t : threads) t.join();
    for (std::size_t i = 0; i < volumes.size(); ++i) CHECK(volumes[i] == doctest::Approx(0.5 + 0.2 * static_cast<double>(i % 3)));
}
