#include <algorithm>
#include <cctype>
#include <sstream>

#include "jitagent/common.hpp"
#include "jitagent/safety/safety.hpp"

namespace jitagent::safety {

namespace {

constexpr std::string_view kDefaultRules = R"(# Default safety rules for the reference host.
# Format: <kind> <pattern> "<reason>"; first matching rule wins.
default allow

# Network, file, process, clock and dynamic-code primitives.
deny_global fetch "network access is not allowed"
deny_global XMLHttpRequest "network access is not allowed"
deny_global WebSocket "network access is not allowed"
deny_global EventSource "network access is not allowed"
deny_global navigator "network access is not allowed"
deny_global require "module loading is not allowed"
deny_global importScripts "module loading is not allowed"
deny_global process "process and environment access is not allowed"
deny_global Deno "process and environment access is not allowed"
deny_global localStorage "persistent storage access is not allowed"
deny_global sessionStorage "persistent storage access is not allowed"
deny_global indexedDB "persistent storage access is not allowed"
deny_global Date "clock access is not allowed"
deny_global performance "clock access is not allowed"
deny_global setTimeout "timers are not allowed"
deny_global setInterval "timers are not allowed"
deny_global setImmediate "timers are not allowed"
deny_global requestAnimationFrame "timers are not allowed"
deny_global eval "dynamic code evaluation is not allowed"
deny_global Function "dynamic code evaluation is not allowed"
deny_global globalThis "direct global object access is not allowed"

# Destructive or wide-reaching changes need the operator's approval.
require_approval app.editor.close* "destructive: closes editor tabs"
require_approval writes>=3 "changes three or more state paths in one script"
)";

constexpr std::string_view kReadOnlyRules = R"(# Verification scripts may only read.
default allow
deny_write app* "verification code must not change application state"
)";

bool valid_glob(std::string_view p) {
    if (p.empty()) return false;
    return std::all_of(p.begin(), p.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '$' || c == '.' || c == '*' || c == '?';
    });
}

bool valid_prefix(std::string_view p) {
    return valid_glob(p) && p.find_first_of("*?") == std::string_view::npos;
}

RuleKind kind_from(std::string_view word, int line) {
    for (RuleKind k : {RuleKind::deny_call, RuleKind::deny_write, RuleKind::deny_global, RuleKind::require_approval,
                       RuleKind::allowlist_mode})
        if (to_string(k) == word) return k;
    throw RuleSyntaxError(line, "unknown rule kind '" + std::string(word) + "'");
}

class LineReader {
public:
    LineReader(std::string_view text, int line) : text_(text), line_(line) {}

    void skip_space() {
        while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_])) != 0) ++i_;
    }
    bool at_end() {
        skip_space();
        return i_ >= text_.size() || text_[i_] == '#';
    }
    std::string word() {
        skip_space();
        std::size_t start = i_;
        while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_])) == 0) ++i_;
        return std::string(text_.substr(start, i_ - start));
    }
    std::string braced() {
        skip_space();
        if (i_ >= text_.size() || text_[i_] != '{') throw RuleSyntaxError(line_, "allowlist_mode expects {prefix,...}");
        auto close = text_.find('}', i_);
        if (close == std::string_view::npos) throw RuleSyntaxError(line_, "unterminated '{'");
        std::string inner(text_.substr(i_ + 1, close - i_ - 1));
        i_ = close + 1;
        return inner;
    }
    std::string quoted() {
        skip_space();
        if (i_ >= text_.size() || text_[i_] != '"') throw RuleSyntaxError(line_, "expected a quoted reason");
        ++i_;
        std::string out;
        while (i_ < text_.size() && text_[i_] != '"') {
            if (text_[i_] == '\\' && i_ + 1 < text_.size()) ++i_;
            out += text_[i_++];
        }
        if (i_ >= text_.size()) throw RuleSyntaxError(line_, "unterminated reason string");
        ++i_;
        return out;
    }

private:
    std::string_view text_;
    int line_;
    std::size_t i_ = 0;
};

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string_view to_string(RuleKind k) {
    switch (k) {
        case RuleKind::deny_call: return "deny_call";
        case RuleKind::deny_write: return "deny_write";
        case RuleKind::deny_global: return "deny_global";
        case RuleKind::require_approval: return "require_approval";
        case RuleKind::allowlist_mode: return "allowlist_mode";
    }
    return "deny_call";
}

std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::Allow: return "Allow";
        case Decision::Deny: return "Deny";
        case Decision::NeedsApproval: return "NeedsApproval";
    }
    return "Allow";
}

RuleSet load_rules(std::string_view document) {
    RuleSet set;
    bool saw_default = false;
    std::istringstream in{std::string(document)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        LineReader r(raw, line);
        if (r.at_end()) continue;
        std::string head = r.word();
        if (head == "default") {
            std::string value = r.word();
            if (value == "allow") set.default_decision = Decision::Allow;
            else if (value == "deny") set.default_decision = Decision::Deny;
            else throw RuleSyntaxError(line, "default must be 'allow' or 'deny'");
            if (saw_default) throw RuleSyntaxError(line, "duplicate default directive");
            saw_default = true;
            if (!r.at_end()) throw RuleSyntaxError(line, "unexpected text after default directive");
            continue;
        }
        SafetyRule rule;
        rule.kind = kind_from(head, line);
        rule.line = line;
        if (rule.kind == RuleKind::allowlist_mode) {
            std::string inner = r.braced();
            std::stringstream parts(inner);
            std::string part;
            while (std::getline(parts, part, ',')) {
                std::string p = trim(part);
                if (!valid_prefix(p)) throw RuleSyntaxError(line, "invalid allowlist prefix '" + p + "'");
                rule.allow_prefixes.push_back(p);
            }
            if (rule.allow_prefixes.empty()) throw RuleSyntaxError(line, "allowlist_mode needs at least one prefix");
        } else {
            rule.pattern = r.word();
            if (rule.pattern.rfind("writes>=", 0) == 0) {
                if (rule.kind != RuleKind::require_approval && rule.kind != RuleKind::deny_write)
                    throw RuleSyntaxError(line, "writes>=N applies only to require_approval and deny_write");
                std::string n = rule.pattern.substr(8);
                if (n.empty() || n.size() > 6 || !std::all_of(n.begin(), n.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }))
                    throw RuleSyntaxError(line, "writes>= needs a positive integer");
                rule.min_writes = std::stoi(n);
                if (*rule.min_writes < 1) throw RuleSyntaxError(line, "writes>= needs a positive integer");
            } else if (!valid_glob(rule.pattern)) {
                throw RuleSyntaxError(line, "invalid pattern '" + rule.pattern + "'");
            }
        }
        rule.reason = r.quoted();
        if (!r.at_end()) throw RuleSyntaxError(line, "unexpected text after reason");
        set.rules.push_back(std::move(rule));
    }
    return set;
}

RuleSet load_rules_file(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError("cannot read rules file '" + path + "': " + e.what());
    }
    return load_rules(text);
}

std::string dump_rules(const RuleSet& rules) {
    std::string out = std::string("default ") + (rules.default_decision == Decision::Deny ? "deny" : "allow") + "\n";
    for (const SafetyRule& r : rules.rules) {
        out += std::string(to_string(r.kind)) + " ";
        if (r.kind == RuleKind::allowlist_mode) {
            out += "{";
            for (std::size_t i = 0; i < r.allow_prefixes.size(); ++i) out += (i ? "," : "") + r.allow_prefixes[i];
            out += "}";
        } else {
            out += r.pattern;
        }
        out += " " + quote(r.reason) + "\n";
    }
    return out;
}

const RuleSet& default_rules() {
    static const RuleSet rules = load_rules(kDefaultRules);
    return rules;
}

const RuleSet& read_only_rules() {
    static const RuleSet rules = load_rules(kReadOnlyRules);
    return rules;
}

bool glob_match(std::string_view p, std::string_view s) {
    // Iterative matcher with single-star backtracking.
    std::size_t pi = 0, si = 0, star = std::string_view::npos, mark = 0;
    while (si < s.size()) {
        if (pi < p.size() && (p[pi] == '?' || p[pi] == s[si])) {
            ++pi;
            ++si;
        } else if (pi < p.size() && p[pi] == '*') {
            star = pi++;
            mark = si;
        } else if (star != std::string_view::npos) {
            pi = star + 1;
            si = ++mark;
        } else {
            return false;
        }
    }
    while (pi < p.size() && p[pi] == '*') ++pi;
    return pi == p.size();
}

bool glob_may_match_prefix(std::string_view p, std::string_view prefix) {
    // Positions of the pattern reachable after consuming `prefix`; any
    // reachable position can be completed to a full match.
    std::vector<bool> states(p.size() + 1, false);
    auto close = [&](std::vector<bool>& st) {
        for (std::size_t i = 0; i < p.size(); ++i)
            if (st[i] && p[i] == '*') st[i + 1] = true;
    };
    states[0] = true;
    close(states);
    for (char c : prefix) {
        std::vector<bool> next(p.size() + 1, false);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!states[i]) continue;
            if (p[i] == '*') next[i] = true;
            else if (p[i] == '?' || p[i] == c) next[i + 1] = true;
        }
        close(next);
        states = std::move(next);
        if (std::none_of(states.begin(), states.end(), [](bool b) { return b; })) return false;
    }
    return true;
}

}  // namespace jitagent::safety
