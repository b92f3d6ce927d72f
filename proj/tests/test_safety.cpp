#include "doctest.h"

#include <filesystem>
#include <random>
#include <regex>

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"
#include "jitagent/safety/safety.hpp"
#include "jitagent/script/parser.hpp"

using namespace jitagent;
using namespace jitagent::safety;
using script::AccessKind;
using script::BridgeRequest;

namespace {

Verdict check(const std::string& src, const RuleSet& rules) { return analyze(sandbox::ActionCode::js(src), rules); }

bool regex_glob(const std::string& pattern, const std::string& text) {
    std::string re;
    for (char c : pattern) {
        if (c == '*') re += ".*";
        else if (c == '?') re += ".";
        else if (c == '.' || c == '$') re += std::string("\\") + c;
        else re += c;
    }
    return std::regex_match(text, std::regex(re));
}

std::vector<std::filesystem::path> corpus(const std::string& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(std::string(JITAGENT_DATA_DIR) + "/safety/" + dir))
        if (e.path().extension() == ".js") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("rule file parsing") {
    RuleSet r = load_rules("deny_write app.library.* \"library is read-only\"\n");
    REQUIRE(r.rules.size() == 1);
    CHECK(r.rules[0].kind == RuleKind::deny_write);
    CHECK(r.rules[0].pattern == "app.library.*");
    CHECK(r.rules[0].reason == "library is read-only");
    CHECK(r.default_decision == Decision::Allow);

    r = load_rules("# comment\n\ndefault deny\nrequire_approval app.editor.close* \"destructive\"  # trailing\n"
                   "allowlist_mode {app.player, app.ui} \"media only\"\nrequire_approval writes>=3 \"wide\"\n");
    CHECK(r.default_decision == Decision::Deny);
    REQUIRE(r.rules.size() == 3);
    CHECK(r.rules[0].kind == RuleKind::require_approval);
    CHECK(r.rules[1].allow_prefixes == std::vector<std::string>{"app.player", "app.ui"});
    CHECK(r.rules[2].min_writes == 3);
    CHECK(load_rules(dump_rules(r)).rules.size() == 3);
    CHECK(dump_rules(load_rules(dump_rules(r))) == dump_rules(r));

    auto line_of = [](const std::string& doc) {
        try {
            load_rules(doc);
        } catch (const RuleSyntaxError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("frobnicate x") == 1);
    CHECK(line_of("# ok\ndeny_call app.x") == 2);
    CHECK(line_of("deny_call app.x \"r\"\ndeny_call app/x \"r\"") == 2);
    CHECK(line_of("default maybe") == 1);
    CHECK(line_of("deny_call writes>=2 \"r\"") == 1);
    CHECK(line_of("allowlist_mode {} \"r\"") == 1);
    CHECK(line_of("deny_call app.x \"r\" extra") == 1);
}

TEST_CASE("the shipped rules file matches the built-in default") {
    CHECK(load_rules_file(std::string(JITAGENT_DATA_DIR) + "/rules.txt") == default_rules());
    CHECK_THROWS_AS(load_rules_file("/nonexistent/rules.txt"), ConfigError);
}

TEST_CASE("property: glob matching agrees with a regex oracle") {
    std::mt19937 rng(5);
    const std::string alpha = "ab.*?";
    const std::string text_alpha = "ab.";
    for (int i = 0; i < 3000; ++i) {
        std::string p, t;
        for (int k = static_cast<int>(rng() % 6); k > 0; --k) p += alpha[rng() % alpha.size()];
        for (int k = static_cast<int>(rng() % 7); k > 0; --k) t += text_alpha[rng() % text_alpha.size()];
        CAPTURE(p);
        CAPTURE(t);
        CHECK(glob_match(p, t) == regex_glob(p, t));
        // Prefix feasibility by brute force over short completions.
        bool feasible = false;
        std::vector<std::string> suffixes = {""};
        for (int len = 0; len < 6 && !feasible; ++len) {
            for (const auto& s : suffixes)
                if (regex_glob(p, t + s)) feasible = true;
            std::vector<std::string> next;
            for (const auto& s : suffixes)
                for (char c : text_alpha) next.push_back(s + c);
            suffixes = std::move(next);
        }
        CHECK(glob_may_match_prefix(p, t) == feasible);
    }
}

TEST_CASE("static analysis examples") {
    Verdict v = check("fetch('http://x')", load_rules("deny_global fetch \"network\""));
    CHECK(v.decision == Decision::Deny);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].line == 1);
    CHECK(v.reasons[0].column == 1);
    CHECK(v.reasons[0].reason == "network");

    CHECK(check("app.player.volume = 0.2", load_rules("deny_write app.library.* \"ro\"")).decision == Decision::Allow);
    CHECK(check("app.player.volume = 0.2", load_rules("deny_write app.library.* \"ro\"")).reasons.empty());

    v = check("app.editor.closeOtherTabs()", load_rules("require_approval app.editor.close* \"destructive\""));
    CHECK(v.decision == Decision::NeedsApproval);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].detail == "invoke app.editor.closeOtherTabs");

    CHECK_THROWS_AS(check("let = ;", default_rules()), script::ScriptSyntaxError);
}

TEST_CASE("deny dominates approval dominates allow") {
    RuleSet r = load_rules("deny_call app.player.next \"no skipping\"\nrequire_approval app.editor.close* \"destructive\"");
    Verdict v = check("app.editor.closeTab('tab1');\napp.player.next();", r);
    CHECK(v.decision == Decision::Deny);
    REQUIRE(v.reasons.size() == 2);
    CHECK(v.reasons[0].line == 1);
    CHECK(v.reasons[1].line == 2);
}

TEST_CASE("aliases, destructuring and computed paths") {
    RuleSet r = load_rules("deny_write app.library.* \"library is read-only\"\nrequire_approval app.editor.close* \"destructive\"");
    CHECK(check("const p = app.player; p.volume = 1", r).decision == Decision::Allow);
    CHECK(check("const ed = app.editor; ed.closeTab('tab1')", r).decision == Decision::NeedsApproval);
    CHECK(check("let ed; ed = app.editor; const f = ed.closeOtherTabs; f()", r).decision == Decision::NeedsApproval);
    CHECK(check("const { editor } = app; editor.closeOtherTabs()", r).decision == Decision::NeedsApproval);
    CHECK(check("const { closeTab: c } = app.editor; c('tab1')", r).decision == Decision::NeedsApproval);
    CHECK(check("app['library'].search('x')", r).decision == Decision::Deny);
    CHECK(check("app.library['sea' + 'rch']('x')", r).decision == Decision::NeedsApproval);
    CHECK(check("app['lib' + 'rary'].favorites()", r).decision == Decision::NeedsApproval);
    CHECK(check("console.log(app['lib' + 'rary'].x)", load_rules("deny_write app.library.* \"ro\"")).decision == Decision::Allow);
    CHECK(check("app['lib' + 'rary'].x = 1", r).decision == Decision::NeedsApproval);
    CHECK(check("const x = app.player || app.editor; x.closeOtherTabs()", r).decision == Decision::NeedsApproval);
    CHECK(check("app.library.favorites()", r).decision == Decision::Allow);
    CHECK(check("app.library.history().map(h => h.track.title)", r).decision == Decision::Allow);
    CHECK(check("app.player.queue.map(t => t.id)", r).decision == Decision::Allow);
    // A local binding named like a denied global is not a global reference.
    CHECK(check("const fetch = (x) => x; fetch(1)", default_rules()).decision == Decision::Allow);
    CHECK(check("window.fetch", default_rules()).decision == Decision::Allow);
}

TEST_CASE("write counting rule") {
    RuleSet r = load_rules("require_approval writes>=3 \"wide\"");
    CHECK(check("app.player.volume = 0.1; app.player.volume = 0.2; app.player.next()", r).decision == Decision::Allow);
    Verdict v = check("app.player.volume = 0.1;\napp.player.next();\napp.ui.navigate('home');", r);
    CHECK(v.decision == Decision::NeedsApproval);
    REQUIRE(v.reasons.size() == 1);
    CHECK(v.reasons[0].line == 3);
    CHECK(check("app.ui.find('x'); app.library.favorites(); app.player.queue; app.player.volume = 1", r).decision ==
          Decision::Allow);
}

TEST_CASE("guard examples") {
    RuleSet r = load_rules("deny_write app.library.* \"ro\"");
    CHECK_FALSE(guard_check({"app.library.favorites", AccessKind::write, {1}}, r).allowed);
    CHECK(guard_check({"app.library.favorites", AccessKind::invoke, {}}, r).allowed);
    CHECK_FALSE(guard_check({"app.library.search", AccessKind::invoke, {"x"}}, r).allowed);

    RuleSet allow = load_rules("allowlist_mode {app.player} \"media only\"");
    GuardDecision d = guard_check({"app.editor.openTab", AccessKind::invoke, {}}, allow);
    CHECK_FALSE(d.allowed);
    CHECK(d.reason.find("not allowlisted") != std::string::npos);
    CHECK(guard_check({"app.player.next", AccessKind::invoke, {}}, allow).allowed);

    RuleSet appr = load_rules("require_approval app.editor.close* \"destructive\"");
    CHECK_FALSE(guard_check({"app.editor.closeOtherTabs", AccessKind::invoke, {}}, appr).allowed);
    CHECK(guard_check({"app.editor.closeOtherTabs", AccessKind::invoke, {}}, appr, true).allowed);

    RuleSet deny_default = load_rules("default deny\ndeny_call app.player.next \"x\"");
    CHECK_FALSE(guard_check({"app.player.volume", AccessKind::read, {}}, deny_default).allowed);

    CHECK_FALSE(guard_check({"app.editor.fontSize", AccessKind::write, {20}}, read_only_rules()).allowed);
    CHECK_FALSE(guard_check({"app.ui.navigate", AccessKind::invoke, {"home"}}, read_only_rules()).allowed);
    CHECK(guard_check({"app.editor.fontSize", AccessKind::read, {}}, read_only_rules()).allowed);
    CHECK(guard_check({"app.ui.find", AccessKind::invoke, {"tab"}}, read_only_rules()).allowed);
}

TEST_CASE("metamorphic: rule order decides shadowed matches") {
    std::string a = "require_approval app.editor.* \"editor changes need review\"";
    std::string b = "deny_call app.editor.closeTab \"never close tabs\"";
    const std::string code = "app.editor.closeTab('tab1')";
    CHECK(check(code, load_rules(a + "\n" + b)).decision == Decision::NeedsApproval);
    CHECK(check(code, load_rules(b + "\n" + a)).decision == Decision::Deny);
    BridgeRequest req{"app.editor.closeTab", AccessKind::invoke, {"tab1"}};
    CHECK(guard_check(req, load_rules(a + "\n" + b), true).allowed);
    CHECK_FALSE(guard_check(req, load_rules(b + "\n" + a), true).allowed);
}

TEST_CASE("property: literal paths matched by deny rules are never allowed") {
    std::mt19937 rng(11);
    const auto& surface = host::bridge_surface();
    std::vector<const host::SurfaceEntry*> entries;
    for (const auto& e : surface)
        if (e.path.rfind("app.", 0) == 0) entries.push_back(&e);
    for (int i = 0; i < 400; ++i) {
        const host::SurfaceEntry& e = *entries[rng() % entries.size()];
        bool is_method = e.kind == host::SurfaceEntry::Kind::method;
        bool writable = e.kind == host::SurfaceEntry::Kind::writable_property;
        std::string parent = e.path.substr(0, e.path.rfind('.'));
        std::string leaf = e.path.substr(e.path.rfind('.') + 1);
        std::string access = is_method ? "()" : writable ? " = 1" : "";
        std::string src;
        switch (rng() % 4) {
            case 0: src = e.path + access; break;
            case 1: src = "const o = " + parent + ";\no." + leaf + access; break;
            case 2: src = "const o = " + parent + ";\no['" + leaf + "']" + access; break;
            default: src = "function go() { let h = " + parent + "; return h." + leaf + access + "; }\ngo();"; break;
        }
        // Pattern: exact path, parent wildcard, or a prefix wildcard.
        std::string pattern;
        switch (rng() % 3) {
            case 0: pattern = e.path; break;
            case 1: pattern = parent + ".*"; break;
            default: pattern = e.path.substr(0, e.path.size() - 2) + "*"; break;
        }
        std::string kind = is_method ? "deny_call" : writable ? "deny_write" : "require_approval";
        RuleSet r = load_rules(kind + " " + pattern + " \"blocked\"");
        CAPTURE(src);
        CAPTURE(pattern);
        Verdict v = check(src, r);
        CHECK(v.decision != Decision::Allow);
        CHECK_FALSE(v.reasons.empty());
        CHECK(check(src, r) == v);
    }
}

TEST_CASE("property: guard decisions follow first-match semantics exactly") {
    std::mt19937 rng(3);
    const std::vector<std::string> patterns = {"app.*", "app.player.*", "app.editor.close*", "app.ui.navigate", "app.library.?istory",
                                               "app.*.volume", "*Tab*"};
    const std::vector<std::string> kinds = {"deny_call", "deny_write", "require_approval"};
    for (int i = 0; i < 300; ++i) {
        std::string doc = rng() % 2 ? "default deny\n" : "";
        std::vector<std::tuple<std::string, std::string>> spec;
        for (int k = static_cast<int>(rng() % 4); k > 0; --k) {
            spec.emplace_back(kinds[rng() % kinds.size()], patterns[rng() % patterns.size()]);
            doc += std::get<0>(spec.back()) + " " + std::get<1>(spec.back()) + " \"r" + std::to_string(k) + "\"\n";
        }
        RuleSet rules = load_rules(doc);
        for (const auto& e : host::bridge_surface()) {
            if (e.kind == host::SurfaceEntry::Kind::global_function) continue;
            for (AccessKind ak : {AccessKind::read, AccessKind::write, AccessKind::invoke}) {
                BridgeRequest req{e.path, ak, {}};
                bool mut = host::is_mutating(req);
                // Oracle: walk the rules in order.
                bool allowed = rules.default_decision == Decision::Allow;
                for (const auto& [kind, pat] : spec) {
                    bool relevant = kind == "deny_call" ? ak == AccessKind::invoke
                                    : kind == "deny_write" ? (ak == AccessKind::write || (ak == AccessKind::invoke && mut))
                                                           : true;
                    if (relevant && regex_glob(pat, e.path)) {
                        allowed = false;
                        break;
                    }
                }
                CAPTURE(doc);
                CAPTURE(e.path);
                CHECK(guard_check(req, rules).allowed == allowed);
                CHECK(guard_check(req, rules).allowed == guard_check(req, rules).allowed);
            }
        }
    }
}

TEST_CASE("safety corpus under the default rules") {
    const host::HostState initial = host::init_fixture("three-tabs");
    auto guard = make_guard(default_rules());
    int blocked_violations = 0, blocked_compliant = 0;
    auto files = corpus("violating");
    REQUIRE(files.size() == 20);
    for (const auto& f : files) {
        CAPTURE(f.filename().string());
        auto code = sandbox::ActionCode::js(read_file(f.string()));
        Verdict v = analyze(code, default_rules());
        bool blocked = v.decision != Decision::Allow;
        host::HostState after = initial;
        if (!blocked) {
            auto [s, r] = sandbox::execute(code, initial, {}, guard);
            blocked = r.status == sandbox::Status::denied;
            after = s;
        }
        CHECK(blocked);
        CHECK(after == initial);
        blocked_violations += blocked ? 1 : 0;
    }
    CHECK(blocked_violations == 20);

    files = corpus("compliant");
    REQUIRE(files.size() == 20);
    for (const auto& f : files) {
        CAPTURE(f.filename().string());
        auto code = sandbox::ActionCode::js(read_file(f.string()));
        Verdict v = analyze(code, default_rules());
        CHECK(v.decision == Decision::Allow);
        auto [s, r] = sandbox::execute(code, initial, {}, guard);
        CHECK_MESSAGE(r.status == sandbox::Status::ok, (r.error ? r.error->display() : ""));
        blocked_compliant += (v.decision != Decision::Allow || r.status == sandbox::Status::denied) ? 1 : 0;
    }
    CHECK(blocked_compliant == 0);
}

TEST_CASE("verdicts round-trip through JSON") {
    Verdict v = check("app.editor.closeTab('tab1'); fetch('x')", default_rules());
    CHECK(verdict_from_json(to_json(v)) == v);
    CHECK(v.decision == Decision::Deny);
}
