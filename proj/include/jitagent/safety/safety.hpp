#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/sandbox/sandbox.hpp"
#include "jitagent/script/interpreter.hpp"

namespace jitagent::safety {

enum class RuleKind { deny_call, deny_write, deny_global, require_approval, allowlist_mode };
std::string_view to_string(RuleKind k);

struct SafetyRule {
    RuleKind kind = RuleKind::deny_call;
    // Glob over dotted bridge paths or global names; `*` spans any run of
    // characters including dots, `?` exactly one. Empty for allowlist_mode.
    std::string pattern;
    // allowlist_mode only: permitted path prefixes.
    std::vector<std::string> allow_prefixes;
    // Script-level rule `writes>=N`: fires when one script writes N or more
    // distinct bridge paths. Static analysis only.
    std::optional<int> min_writes;
    std::string reason;
    int line = 0;

    bool operator==(const SafetyRule&) const = default;
};

enum class Decision { Allow, Deny, NeedsApproval };
std::string_view to_string(Decision d);

struct RuleSet {
    std::vector<SafetyRule> rules;
    Decision default_decision = Decision::Allow;  // Allow or Deny

    bool operator==(const RuleSet&) const = default;
};

// Line-oriented rule file:
//   # comment
//   default allow|deny
//   deny_call <glob> "<reason>"
//   deny_write <glob> "<reason>"
//   deny_global <glob> "<reason>"
//   require_approval <glob> "<reason>"
//   require_approval writes>=<N> "<reason>"
//   allowlist_mode {<prefix>,<prefix>...} "<reason>"
// Throws RuleSyntaxError with the 1-based line number.
RuleSet load_rules(std::string_view document);
RuleSet load_rules_file(const std::string& path);
std::string dump_rules(const RuleSet& rules);
// The ruleset shipped with the reference host (data/rules.txt).
const RuleSet& default_rules();
// Denies every state change; used for verification scripts.
const RuleSet& read_only_rules();

bool glob_match(std::string_view pattern, std::string_view text);
// True when some string starting with `prefix` matches `pattern`.
bool glob_may_match_prefix(std::string_view pattern, std::string_view prefix);

struct Reason {
    std::string reason;
    int line = 0;
    int column = 0;
    std::string detail;  // the access that triggered it, e.g. "invoke app.editor.closeTab"

    bool operator==(const Reason&) const = default;
};

struct Verdict {
    Decision decision = Decision::Allow;
    std::vector<Reason> reasons;

    bool operator==(const Verdict&) const = default;
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

// Static check of a whole script. Throws script::ScriptSyntaxError when the
// source does not parse.
Verdict analyze(const sandbox::ActionCode& code, const RuleSet& rules);

struct GuardDecision {
    bool allowed = true;
    std::string reason;
};

// Exact evaluation for one concrete bridge call. require_approval rules deny
// unless `approved` is set.
GuardDecision guard_check(const script::BridgeRequest& call, const RuleSet& rules, bool approved = false);
sandbox::Guard make_guard(RuleSet rules, bool approved = false);

}  // namespace jitagent::safety
