#include "doctest.h"

#include <map>
#include <random>
#include <set>

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"
#include "jitagent/script/interpreter.hpp"

using namespace jitagent;
using namespace jitagent::host;
using nlohmann::json;

namespace {

json call(HostState& s, const std::string& path, AccessKind kind = AccessKind::invoke, std::vector<json> args = {}) {
    return dispatch_in_place(s, BridgeRequest{path, kind, std::move(args)});
}

// Independent oracle: every leaf (scalar or array) keyed by its slash path.
void flatten(const json& j, const std::string& path, std::map<std::string, json>& out) {
    if (j.is_object() && !j.empty()) {
        for (const auto& [k, v] : j.items()) flatten(v, path.empty() ? k : path + "/" + k, out);
        return;
    }
    out[path] = j;
}

std::map<std::string, json> leaves(const HostState& s) {
    json j = to_json(s);
    j.erase("format_version");
    std::map<std::string, json> out;
    flatten(j, "", out);
    return out;
}

BridgeRequest random_request(std::mt19937& rng, const HostState& s) {
    const auto& surface = bridge_surface();
    std::uniform_int_distribution<std::size_t> pick(0, surface.size() - 1);
    std::uniform_int_distribution<int> coin(0, 9);
    const SurfaceEntry& e = surface[pick(rng)];
    BridgeRequest r{e.path, AccessKind::read, {}};
    if (e.kind == SurfaceEntry::Kind::method) r.kind = AccessKind::invoke;
    if (e.kind == SurfaceEntry::Kind::writable_property && coin(rng) < 6) r.kind = AccessKind::write;
    if (coin(rng) == 0) r.kind = static_cast<AccessKind>(coin(rng) % 3);

    std::uniform_real_distribution<double> real(-1.0, 2.0);
    const std::vector<json> routes = {"home", "library", "library/favorites", "library/history", "editor", "search?q=ea", "nowhere"};
    if (r.kind == AccessKind::write) {
        if (e.path == "app.player.volume") r.args = {real(rng)};
        else if (e.path == "app.editor.fontSize") r.args = {real(rng) * 60};
        else r.args = {json::array({"a", "b"})};
        if (coin(rng) == 0) r.args = {"oops"};
    } else if (r.kind == AccessKind::invoke) {
        if (e.path == "app.ui.navigate") r.args = {routes[static_cast<std::size_t>(coin(rng)) % routes.size()]};
        else if (e.path == "app.library.search") r.args = {coin(rng) < 5 ? json("e") : json(42)};
        else if (e.path == "app.editor.closeTab") r.args = {s.editor.tabs[static_cast<std::size_t>(coin(rng)) % s.editor.tabs.size()].id};
        else if (e.path == "app.editor.openTab") r.args = {"n.md", json::array({"x"})};
        else if (e.path == "app.ui.find") r.args = {coin(rng) < 5 ? "tab" : "Back"};
        else if (e.path == "app.ui.click") {
            UiNode tree = ui_tree(s);
            auto nodes = find_nodes(tree, "tab");
            r.args = {nodes.empty() ? json("missing") : json(nodes[static_cast<std::size_t>(coin(rng)) % nodes.size()]->id)};
        }
        if (coin(rng) == 0) r.args.push_back(1);
    }
    return r;
}

}  // namespace

TEST_CASE("fixtures serialize byte-identically to the golden files") {
    for (const std::string& name : fixture_names()) {
        CAPTURE(name);
        std::string golden = read_file(std::string(JITAGENT_DATA_DIR) + "/fixtures/" + name + ".json");
        HostState s = init_fixture(name);
        CHECK(serialize(s) == golden);
        CHECK(deserialize(golden) == s);
        CHECK(state_hash(s) == sha256_hex(golden));
        validate(s);
    }
    CHECK_THROWS_AS(init_fixture("nope"), UnknownFixture);
}

TEST_CASE("deserialize rejects malformed and inconsistent states") {
    CHECK_THROWS_AS(deserialize("{"), InvalidState);
    json j = to_json(init_fixture("default"));
    j["format_version"] = 2;
    CHECK_THROWS_AS(from_json(j), InvalidState);
    j = to_json(init_fixture("default"));
    j["player"]["queue"].push_back("t99");
    CHECK_THROWS_AS(from_json(j), InvalidState);
    j = to_json(init_fixture("default"));
    j["editor"]["active_tab"] = "tab7";
    CHECK_THROWS_AS(from_json(j), InvalidState);
    j = to_json(init_fixture("default"));
    j["current_route"] = "settings";
    CHECK_THROWS_AS(from_json(j), InvalidState);
}

TEST_CASE("volume and font size are clamped") {
    HostState s = init_fixture("default");
    CHECK(call(s, "app.player.volume", AccessKind::write, {1.7}) == json(1.0));
    CHECK(s.player.volume == 1.0);
    call(s, "app.player.volume", AccessKind::write, {-3});
    CHECK(s.player.volume == 0.0);
    call(s, "app.player.volume", AccessKind::write, {0.6});
    CHECK(call(s, "app.player.volume", AccessKind::read) == json(0.6));
    call(s, "app.editor.fontSize", AccessKind::write, {15.6});
    CHECK(s.active_document().font_size == 16);
    call(s, "app.editor.fontSize", AccessKind::write, {500});
    CHECK(s.active_document().font_size == 72);
    call(s, "app.editor.fontSize", AccessKind::write, {1});
    CHECK(s.active_document().font_size == 6);
    CHECK_THROWS_AS(call(s, "app.player.volume", AccessKind::write, {"loud"}), ArgumentTypeError);
}

TEST_CASE("player next and previous wrap and record history") {
    HostState s = init_fixture("default");
    json t = call(s, "app.player.next");
    CHECK(t["id"] == "t08");
    CHECK(s.player.history.back() == HistoryEntry{"t08", 6});
    CHECK(s.logical_clock == 6);
    call(s, "app.player.next");
    call(s, "app.player.next");
    CHECK(call(s, "app.player.next")["id"] == "t02");
    CHECK(call(s, "app.player.previous")["id"] == "t03");
    CHECK(call(s, "app.player.currentTrack", AccessKind::read)["title"] == "Imagine");
    CHECK_THROWS_AS(call(s, "app.player.next", AccessKind::invoke, {1}), ArityError);
}

TEST_CASE("library reads and search") {
    HostState s = init_fixture("default");
    json fav = call(s, "app.library.favorites");
    REQUIRE(fav.size() == 3);
    CHECK(fav[0]["title"] == "Hotel California");
    json hist = call(s, "app.library.history");
    CHECK(hist.size() == 5);
    CHECK(hist[4]["track"]["id"] == "t05");
    HostState before = s;
    json found = call(s, "app.library.search", AccessKind::invoke, {"hotel california"});
    REQUIRE(found.size() == 1);
    CHECK(found[0]["id"] == "t01");
    CHECK(s.current_route == "search?q=hotel california");
    CHECK(s.logical_clock == before.logical_clock + 1);
    CHECK_THROWS_AS(call(s, "app.library.search", AccessKind::invoke, {7}), ArgumentTypeError);
}

TEST_CASE("editor tabs") {
    HostState s = init_fixture("three-tabs");
    CHECK(call(s, "app.editor.activeTab", AccessKind::read) == "tab2");
    CHECK(call(s, "app.editor.activeDocument.title", AccessKind::read) == "todo.md");
    std::string id = call(s, "app.editor.openTab", AccessKind::invoke, {"new.md", json::array({"a", "b"})});
    CHECK(id == "tab4");
    CHECK(s.editor.active_tab == "tab4");
    CHECK(s.active_document().id == "doc4");
    CHECK(s.active_document().paragraphs == std::vector<std::string>{"a", "b"});
    call(s, "app.editor.closeTab", AccessKind::invoke, {"tab4"});
    CHECK(s.editor.active_tab == "tab3");
    CHECK_THROWS_AS(call(s, "app.editor.closeTab", AccessKind::invoke, {"tab9"}), DomainError);
    call(s, "app.editor.closeOtherTabs");
    REQUIRE(s.editor.tabs.size() == 1);
    CHECK(s.editor.tabs[0].id == "tab3");
    HostState before = s;
    CHECK_THROWS_AS(call(s, "app.editor.closeTab", AccessKind::invoke, {"tab3"}), DomainError);
    CHECK(s == before);
    CHECK_THROWS_AS(call(s, "app.editor.activeTab", AccessKind::write, {"tab1"}), ArgumentTypeError);
    call(s, "app.editor.activeDocument.paragraphs", AccessKind::write, {json::array({"x"})});
    CHECK(s.active_document().paragraphs == std::vector<std::string>{"x"});
    validate(s);
}

TEST_CASE("ui tree, find and click") {
    HostState s = init_fixture("default");
    CHECK_THROWS_AS(call(s, "app.ui.navigate", AccessKind::invoke, {"settings"}), DomainError);
    call(s, "app.ui.navigate", AccessKind::invoke, {"library"});
    json tabs = call(s, "app.ui.find", AccessKind::invoke, {"tab"});
    CHECK(tabs.size() == 6);
    json liked = call(s, "app.ui.find", AccessKind::invoke, {"liked songs"});
    REQUIRE(liked.size() == 1);
    CHECK(liked[0]["$methods"]["click"]["path"] == "app.ui.click");
    call(s, "app.ui.click", AccessKind::invoke, {liked[0]["id"]});
    CHECK(s.current_route == "library/favorites");
    json items = call(s, "app.ui.find", AccessKind::invoke, {"item"});
    CHECK(items.size() == 3);

    HostState t = init_fixture("three-tabs");
    call(t, "app.ui.navigate", AccessKind::invoke, {"editor"});
    call(t, "app.ui.click", AccessKind::invoke, {"doctab-tab3"});
    CHECK(t.editor.active_tab == "tab3");
    CHECK_THROWS_AS(call(t, "app.ui.click", AccessKind::invoke, {"nope"}), DomainError);
}

TEST_CASE("unknown paths and wrong access kinds") {
    HostState s = init_fixture("default");
    CHECK_THROWS_AS(call(s, "app.player.shuffle"), UnknownPath);
    CHECK_THROWS_AS(call(s, "app.player.queue", AccessKind::invoke), ArgumentTypeError);
    CHECK_THROWS_AS(call(s, "app.player"), ArgumentTypeError);
    CHECK(is_mutating({"app.player.volume", AccessKind::write, {}}));
    CHECK_FALSE(is_mutating({"app.player.volume", AccessKind::read, {}}));
    CHECK(is_mutating({"app.ui.navigate", AccessKind::invoke, {}}));
    CHECK_FALSE(is_mutating({"app.ui.find", AccessKind::invoke, {}}));
}

TEST_CASE("surface entries are unique and well formed") {
    std::set<std::string> seen;
    for (const SurfaceEntry& e : bridge_surface()) {
        CHECK(seen.insert(e.path).second);
        CHECK_FALSE(e.doc.empty());
        CHECK_FALSE(e.signature.empty());
        for (const std::string& edge : e.edges) CHECK_MESSAGE(find_entry(edge) != nullptr, edge);
        if (e.kind == SurfaceEntry::Kind::property) CHECK_FALSE(e.mutating);
    }
    CHECK(seen.size() == 21);
}

TEST_CASE("property: random dispatch keeps invariants, determinism and atomicity") {
    std::mt19937 rng(20240611);
    for (const std::string& fixture : fixture_names()) {
        HostState s = init_fixture(fixture);
        for (int i = 0; i < 400; ++i) {
            BridgeRequest r = random_request(rng, s);
            CAPTURE(r.path);
            HostState before = s;
            json v1, v2;
            bool ok1 = true, ok2 = true;
            HostState a = s, b = s;
            try { v1 = dispatch_in_place(a, r); } catch (const Error&) { ok1 = false; }
            try {
                auto res = dispatch(before, r);
                b = res.state;
                v2 = res.value;
            } catch (const Error&) { ok2 = false; }
            REQUIRE(ok1 == ok2);
            if (!ok1) {
                CHECK(a == before);
                continue;
            }
            CHECK(a == b);
            CHECK(v1 == v2);
            validate(a);
            CHECK(a.logical_clock >= before.logical_clock);
            if (!is_mutating(r)) CHECK(a == before);
            else CHECK(a.logical_clock == before.logical_clock + 1);
            s = a;
        }
    }
}

TEST_CASE("property: diff matches the leaf oracle and apply_diff round-trips") {
    std::mt19937 rng(7);
    HostState s = init_fixture("three-tabs");
    for (int i = 0; i < 300; ++i) {
        HostState before = s;
        try {
            dispatch_in_place(s, random_request(rng, s));
        } catch (const Error&) {
        }
        StateDiff d = diff(before, s);
        auto la = leaves(before);
        auto lb = leaves(s);
        std::set<std::string> expected;
        for (const auto& [k, v] : la)
            if (!lb.count(k) || lb[k] != v) expected.insert(k);
        for (const auto& [k, v] : lb)
            if (!la.count(k)) expected.insert(k);
        // Removed/added subtrees are reported once at their root; expand them.
        std::set<std::string> got;
        for (const DiffEntry& e : d.entries) {
            std::map<std::string, json> sub;
            if (e.before) flatten(*e.before, e.path, sub);
            if (e.after) flatten(*e.after, e.path, sub);
            for (const auto& [k, v] : sub) {
                bool changed = !la.count(k) || !lb.count(k) || la[k] != lb[k];
                if (changed) got.insert(k);
            }
        }
        CHECK(got == expected);
        CHECK(d.empty() == (before == s));
        CHECK(apply_diff(before, d) == s);
        CHECK(diff_from_json(to_json(d)) == d);
    }
}

TEST_CASE("scripts drive the host through the bridge") {
    HostState s = init_fixture("default");
    HostBridge bridge(s);
    script::Interpreter interp(bridge, {});
    auto out = interp.run(R"(
const p = app.player;
p.volume = Math.min(1, p.volume + 0.1);
console.log("Volume increased to " + p.volume);
)");
    REQUIRE(out.kind == script::Outcome::Kind::ok);
    CHECK(out.console == std::vector<std::string>{"Volume increased to 0.6"});
    CHECK(s.player.volume == doctest::Approx(0.6));

    script::Interpreter interp2(bridge, {});
    out = interp2.run(R"(
app.ui.navigate('library').then(() => {
  const tab = app.ui.find('Liked Songs')[0];
  tab.click();
});
)");
    REQUIRE_MESSAGE(out.kind == script::Outcome::Kind::ok, out.error_message);
    CHECK(s.current_route == "library/favorites");

    script::Interpreter interp3(bridge, {});
    out = interp3.run("app.player.shuffle()");
    CHECK(out.kind == script::Outcome::Kind::thrown);
    CHECK(out.error_name == "TypeError");

    script::Interpreter interp4(bridge, {});
    out = interp4.run("Object.keys(app.editor).join(',')");
    REQUIRE(out.kind == script::Outcome::Kind::ok);
    CHECK(out.completion->get<std::string>() == "activeDocument,tabs,activeTab,openTab,closeTab,closeOtherTabs,fontSize");
}

TEST_CASE("bridge hook sees every call and may deny") {
    HostState s = init_fixture("default");
    std::vector<std::string> seen;
    HostBridge bridge(s, [&](const BridgeRequest& r) {
        seen.push_back(r.path);
        if (r.path == "app.editor.closeOtherTabs") throw script::GuardDenial("no");
    });
    script::Interpreter interp(bridge, {});
    auto out = interp.run("app.player.next(); try { app.editor.closeOtherTabs(); } catch (e) {} app.player.next();");
    CHECK(out.kind == script::Outcome::Kind::guard_denied);
    CHECK(seen == std::vector<std::string>{"app.player.next", "app.editor.closeOtherTabs"});
    CHECK(bridge.call_count() == 1);
}
