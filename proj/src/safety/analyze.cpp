#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"
#include "jitagent/safety/safety.hpp"
#include "jitagent/script/parser.hpp"

namespace jitagent::safety {

using namespace script;
using nlohmann::json;

namespace {

enum class Op { read, write, invoke };

std::string_view op_name(Op op) {
    switch (op) {
        case Op::read: return "read";
        case Op::write: return "write";
        case Op::invoke: return "invoke";
    }
    return "read";
}

// Whether an access may change host state. Unknown invoked paths count as
// mutating unless they hang off a known property (a value method such as
// app.player.queue.map).
bool may_mutate(Op op, const std::string& path) {
    if (op == Op::write) return true;
    if (op == Op::read) return false;
    if (const host::SurfaceEntry* e = host::find_entry(path)) return e->mutating && e->kind == host::SurfaceEntry::Kind::method;
    if (host::is_namespace(path)) return false;
    for (auto dot = path.rfind('.'); dot != std::string::npos && dot > 0; dot = path.rfind('.', dot - 1)) {
        std::string prefix = path.substr(0, dot);
        if (host::find_entry(prefix) != nullptr) return false;
        if (host::is_namespace(prefix)) break;
    }
    return true;
}

bool under_prefix(const std::string& path, const std::string& prefix) {
    return path == prefix || (path.size() > prefix.size() && path.compare(0, prefix.size(), prefix) == 0 && path[prefix.size()] == '.');
}

struct Hit {
    Decision decision = Decision::Allow;
    std::string reason;
};

bool applies(const SafetyRule& r, Op op, bool mutating) {
    if (r.min_writes) return false;
    switch (r.kind) {
        case RuleKind::deny_call: return op == Op::invoke;
        case RuleKind::deny_write: return op == Op::write || (op == Op::invoke && mutating);
        case RuleKind::deny_global: return false;
        case RuleKind::require_approval:
        case RuleKind::allowlist_mode: return true;
    }
    return false;
}

Decision decision_of(RuleKind k) {
    return k == RuleKind::require_approval ? Decision::NeedsApproval : Decision::Deny;
}

Hit evaluate_access(const RuleSet& rules, Op op, const std::string& path) {
    bool mutating = may_mutate(op, path);
    for (const SafetyRule& r : rules.rules) {
        if (!applies(r, op, mutating)) continue;
        if (r.kind == RuleKind::allowlist_mode) {
            bool ok = std::any_of(r.allow_prefixes.begin(), r.allow_prefixes.end(),
                                  [&](const std::string& p) { return under_prefix(path, p); });
            if (ok) return {};
            return {Decision::Deny, "not allowlisted: " + r.reason};
        }
        if (glob_match(r.pattern, path)) return {decision_of(r.kind), r.reason};
    }
    if (rules.default_decision == Decision::Deny) return {Decision::Deny, "denied by default"};
    return {};
}

// Decision for an access whose path is only known to start with `base.`.
Hit evaluate_dynamic(const RuleSet& rules, Op op, const std::string& base) {
    bool mutating = op != Op::read;
    const std::string prefix = base + ".";
    for (const SafetyRule& r : rules.rules) {
        if (!applies(r, op, mutating)) continue;
        if (r.kind == RuleKind::allowlist_mode) {
            bool ok = std::any_of(r.allow_prefixes.begin(), r.allow_prefixes.end(),
                                  [&](const std::string& p) { return under_prefix(base, p); });
            if (ok) return {};
            return {Decision::NeedsApproval, "computed property under " + base + " may leave the allowlist: " + r.reason};
        }
        if (glob_may_match_prefix(r.pattern, prefix))
            return {Decision::NeedsApproval, "computed property under " + base + " may match a rule: " + r.reason};
    }
    if (rules.default_decision == Decision::Deny)
        return {Decision::NeedsApproval, "computed property under " + base + " under default deny"};
    return {};
}

int severity(Decision d) {
    switch (d) {
        case Decision::Allow: return 0;
        case Decision::NeedsApproval: return 1;
        case Decision::Deny: return 2;
    }
    return 0;
}

// Statically known bridge paths an expression may evaluate to, plus bases of
// paths that continue through a computed (non-literal) key.
struct Resolved {
    std::set<std::string> paths;
    std::set<std::string> dynamic;

    bool empty() const { return paths.empty() && dynamic.empty(); }
    void merge(const Resolved& o) {
        paths.insert(o.paths.begin(), o.paths.end());
        dynamic.insert(o.dynamic.begin(), o.dynamic.end());
    }
    bool operator==(const Resolved&) const = default;
};

std::optional<std::string> literal_key(const Node& n) {
    switch (n.kind) {
        case NodeKind::String: return as<StringLit>(n).value;
        case NodeKind::Number: return number_to_string(as<NumberLit>(n).value);
        case NodeKind::Template: {
            const auto& t = as<TemplateLit>(n);
            if (t.exprs.empty() && t.quasis.size() == 1) return t.quasis[0];
            return std::nullopt;
        }
        default: return std::nullopt;
    }
}

Resolved member_of(const Resolved& base, const std::optional<std::string>& key) {
    Resolved out;
    out.dynamic = base.dynamic;
    if (key) {
        for (const auto& p : base.paths) out.paths.insert(p + "." + *key);
    } else {
        out.dynamic.insert(base.paths.begin(), base.paths.end());
    }
    return out;
}

// Calls `f` on every direct child node.
void for_each_child(const Node& n, const std::function<void(const Node&)>& f) {
    auto one = [&](const NodePtr& p) {
        if (p) f(*p);
    };
    auto many = [&](const std::vector<NodePtr>& v) {
        for (const auto& p : v) one(p);
    };
    switch (n.kind) {
        case NodeKind::Template: many(as<TemplateLit>(n).exprs); break;
        case NodeKind::Array: many(as<ArrayLit>(n).elements); break;
        case NodeKind::Object:
            for (const auto& p : as<ObjectLit>(n).props) {
                one(p.computed_key);
                one(p.value);
            }
            break;
        case NodeKind::Function: {
            const auto& fn = as<FunctionNode>(n);
            many(fn.params);
            one(fn.body);
            break;
        }
        case NodeKind::Member: {
            const auto& m = as<MemberExpr>(n);
            one(m.object);
            one(m.computed);
            break;
        }
        case NodeKind::Call:
        case NodeKind::New: {
            const auto& c = as<CallExpr>(n);
            one(c.callee);
            many(c.args);
            break;
        }
        case NodeKind::Unary: one(as<UnaryExpr>(n).arg); break;
        case NodeKind::Update: one(as<UpdateExpr>(n).arg); break;
        case NodeKind::Binary:
        case NodeKind::Logical: {
            const auto& b = as<BinaryExpr>(n);
            one(b.left);
            one(b.right);
            break;
        }
        case NodeKind::Conditional: {
            const auto& c = as<ConditionalExpr>(n);
            one(c.test);
            one(c.consequent);
            one(c.alternate);
            break;
        }
        case NodeKind::Assign: {
            const auto& a = as<AssignExpr>(n);
            one(a.target);
            one(a.value);
            break;
        }
        case NodeKind::Sequence: many(as<SequenceExpr>(n).exprs); break;
        case NodeKind::Spread: one(as<SpreadExpr>(n).arg); break;
        case NodeKind::Await: one(as<AwaitExpr>(n).arg); break;
        case NodeKind::ObjectPattern:
            for (const auto& p : as<ObjectPattern>(n).props) {
                one(p.computed_key);
                one(p.target);
            }
            one(as<ObjectPattern>(n).rest);
            break;
        case NodeKind::ArrayPattern: many(as<ArrayPattern>(n).elements); break;
        case NodeKind::RestElement: one(as<RestElement>(n).target); break;
        case NodeKind::AssignPattern: {
            const auto& a = as<AssignPattern>(n);
            one(a.target);
            one(a.fallback);
            break;
        }
        case NodeKind::VarDecl:
            for (const auto& d : as<VarDecl>(n).decls) {
                one(d.target);
                one(d.init);
            }
            break;
        case NodeKind::FunctionDecl: f(*as<FunctionDecl>(n).fn); break;
        case NodeKind::Return: one(as<ReturnStmt>(n).arg); break;
        case NodeKind::If: {
            const auto& s = as<IfStmt>(n);
            one(s.test);
            one(s.consequent);
            one(s.alternate);
            break;
        }
        case NodeKind::For: {
            const auto& s = as<ForStmt>(n);
            one(s.init);
            one(s.test);
            one(s.update);
            one(s.body);
            break;
        }
        case NodeKind::ForOf:
        case NodeKind::ForIn: {
            const auto& s = as<ForEachStmt>(n);
            one(s.target);
            one(s.iterable);
            one(s.body);
            break;
        }
        case NodeKind::While:
        case NodeKind::DoWhile: {
            const auto& s = as<WhileStmt>(n);
            one(s.test);
            one(s.body);
            break;
        }
        case NodeKind::Throw: one(as<ThrowStmt>(n).arg); break;
        case NodeKind::Try: {
            const auto& s = as<TryStmt>(n);
            one(s.block);
            one(s.param);
            one(s.handler);
            one(s.finalizer);
            break;
        }
        case NodeKind::Block:
        case NodeKind::Program: many(as<BlockStmt>(n).body); break;
        case NodeKind::ExprStmt: one(as<ExprStmt>(n).expr); break;
        case NodeKind::Switch: {
            const auto& s = as<SwitchStmt>(n);
            one(s.discriminant);
            for (const auto& c : s.cases) {
                one(c.test);
                many(c.body);
            }
            break;
        }
        default: break;
    }
}

bool is_pattern(const Node& n) {
    return n.kind == NodeKind::ObjectPattern || n.kind == NodeKind::ArrayPattern || n.kind == NodeKind::RestElement ||
           n.kind == NodeKind::AssignPattern;
}

class Analyzer {
public:
    Analyzer(const Program& program, const RuleSet& rules) : program_(program), rules_(rules) {}

    Verdict run() {
        collect_declared(program_);
        // Aliases are flow-insensitive; iterate until the map stops growing.
        for (int round = 0; round < 16; ++round) {
            auto before = aliases_;
            collect_aliases(program_);
            if (aliases_ == before) break;
        }
        visit(program_, Ctx::read);
        return verdict();
    }

private:
    enum class Ctx { read, write, invoke, chain, pattern };

    struct Site {
        Op op;
        std::string path;
        bool dynamic;
        Pos pos;
    };

    void collect_declared(const Node& n) {
        switch (n.kind) {
            case NodeKind::VarDecl:
                for (const auto& d : as<VarDecl>(n).decls) declare_pattern(*d.target);
                break;
            case NodeKind::Function: {
                const auto& fn = as<FunctionNode>(n);
                if (!fn.name.empty()) declared_.insert(fn.name);
                for (const auto& p : fn.params) declare_pattern(*p);
                break;
            }
            case NodeKind::FunctionDecl: declared_.insert(as<FunctionDecl>(n).fn->name); break;
            case NodeKind::Try:
                if (as<TryStmt>(n).param) declare_pattern(*as<TryStmt>(n).param);
                break;
            case NodeKind::ForOf:
            case NodeKind::ForIn:
                if (as<ForEachStmt>(n).decl_kind) declare_pattern(*as<ForEachStmt>(n).target);
                break;
            default: break;
        }
        for_each_child(n, [&](const Node& c) { collect_declared(c); });
    }

    void declare_pattern(const Node& p) {
        switch (p.kind) {
            case NodeKind::Identifier: declared_.insert(as<Identifier>(p).name); break;
            case NodeKind::ObjectPattern:
                for (const auto& pp : as<ObjectPattern>(p).props) declare_pattern(*pp.target);
                if (as<ObjectPattern>(p).rest) declare_pattern(*as<ObjectPattern>(p).rest);
                break;
            case NodeKind::ArrayPattern:
                for (const auto& e : as<ArrayPattern>(p).elements)
                    if (e) declare_pattern(*e);
                break;
            case NodeKind::RestElement: declare_pattern(*as<RestElement>(p).target); break;
            case NodeKind::AssignPattern: declare_pattern(*as<AssignPattern>(p).target); break;
            default: break;
        }
    }

    Resolved resolve(const Node& n) const {
        switch (n.kind) {
            case NodeKind::Identifier: {
                const auto& name = as<Identifier>(n).name;
                if (name == host::kRootName) return Resolved{{std::string(host::kRootName)}, {}};
                auto it = aliases_.find(name);
                return it == aliases_.end() ? Resolved{} : it->second;
            }
            case NodeKind::Member: {
                const auto& m = as<MemberExpr>(n);
                Resolved base = resolve(*m.object);
                if (base.empty()) return {};
                std::optional<std::string> key = m.is_computed() ? literal_key(*m.computed) : std::optional<std::string>(m.property);
                return member_of(base, key);
            }
            case NodeKind::Logical: {
                const auto& b = as<BinaryExpr>(n);
                Resolved r = resolve(*b.left);
                r.merge(resolve(*b.right));
                return r;
            }
            case NodeKind::Conditional: {
                const auto& c = as<ConditionalExpr>(n);
                Resolved r = resolve(*c.consequent);
                r.merge(resolve(*c.alternate));
                return r;
            }
            case NodeKind::Sequence: {
                const auto& s = as<SequenceExpr>(n);
                return s.exprs.empty() ? Resolved{} : resolve(*s.exprs.back());
            }
            case NodeKind::Assign: return resolve(*as<AssignExpr>(n).value);
            case NodeKind::Await: return resolve(*as<AwaitExpr>(n).arg);
            default: return {};
        }
    }

    void bind(const Node& pattern, const Resolved& value) {
        if (value.empty()) {
            if (pattern.kind == NodeKind::AssignPattern) {
                const auto& a = as<AssignPattern>(pattern);
                bind(*a.target, resolve(*a.fallback));
            }
            return;
        }
        switch (pattern.kind) {
            case NodeKind::Identifier: aliases_[as<Identifier>(pattern).name].merge(value); break;
            case NodeKind::ObjectPattern:
                for (const auto& pp : as<ObjectPattern>(pattern).props) {
                    std::optional<std::string> key = pp.computed_key ? literal_key(*pp.computed_key) : std::optional<std::string>(pp.key);
                    bind(*pp.target, member_of(value, key));
                }
                break;
            case NodeKind::ArrayPattern: {
                const auto& elems = as<ArrayPattern>(pattern).elements;
                for (std::size_t i = 0; i < elems.size(); ++i)
                    if (elems[i]) bind(*elems[i], member_of(value, std::to_string(i)));
                break;
            }
            case NodeKind::AssignPattern: {
                const auto& a = as<AssignPattern>(pattern);
                Resolved merged = value;
                merged.merge(resolve(*a.fallback));
                bind(*a.target, merged);
                break;
            }
            default: break;
        }
    }

    void collect_aliases(const Node& n) {
        if (n.kind == NodeKind::VarDecl) {
            for (const auto& d : as<VarDecl>(n).decls)
                if (d.init) bind(*d.target, resolve(*d.init));
        } else if (n.kind == NodeKind::Assign) {
            const auto& a = as<AssignExpr>(n);
            if (a.op == "=" || a.op == "||=" || a.op == "?\?=" || a.op == "&&=") bind(*a.target, resolve(*a.value));
        }
        for_each_child(n, [&](const Node& c) { collect_aliases(c); });
    }

    void record(const Resolved& r, Op op, Pos pos) {
        for (const auto& p : r.paths) sites_.push_back({op, p, false, pos});
        for (const auto& p : r.dynamic) sites_.push_back({op, p, true, pos});
    }

    void visit(const Node& n, Ctx ctx) {
        switch (n.kind) {
            case NodeKind::Identifier: {
                const auto& name = as<Identifier>(n).name;
                if (ctx == Ctx::pattern) return;
                if (name != host::kRootName && declared_.count(name) == 0) globals_.push_back({name, n.pos});
                if (ctx == Ctx::invoke) record(resolve(n), Op::invoke, n.pos);
                return;
            }
            case NodeKind::Member: {
                const auto& m = as<MemberExpr>(n);
                if (ctx == Ctx::read || ctx == Ctx::write || ctx == Ctx::invoke) {
                    Op op = ctx == Ctx::write ? Op::write : ctx == Ctx::invoke ? Op::invoke : Op::read;
                    record(resolve(n), op, n.pos);
                }
                visit(*m.object, Ctx::chain);
                if (m.computed) visit(*m.computed, Ctx::read);
                return;
            }
            case NodeKind::Call:
            case NodeKind::New: {
                const auto& c = as<CallExpr>(n);
                visit(*c.callee, Ctx::invoke);
                for (const auto& a : c.args) visit(*a, Ctx::read);
                return;
            }
            case NodeKind::Assign: {
                const auto& a = as<AssignExpr>(n);
                if (a.op != "=" && !is_pattern(*a.target)) visit(*a.target, Ctx::read);
                visit(*a.target, is_pattern(*a.target) ? Ctx::pattern : Ctx::write);
                visit(*a.value, Ctx::read);
                return;
            }
            case NodeKind::Update:
                visit(*as<UpdateExpr>(n).arg, Ctx::read);
                visit(*as<UpdateExpr>(n).arg, Ctx::write);
                return;
            case NodeKind::Unary: {
                const auto& u = as<UnaryExpr>(n);
                visit(*u.arg, u.op == "delete" ? Ctx::write : Ctx::read);
                return;
            }
            case NodeKind::ObjectPattern:
                for (const auto& pp : as<ObjectPattern>(n).props) {
                    if (pp.computed_key) visit(*pp.computed_key, Ctx::read);
                    visit(*pp.target, ctx == Ctx::write ? Ctx::write : Ctx::pattern);
                }
                if (as<ObjectPattern>(n).rest) visit(*as<ObjectPattern>(n).rest, Ctx::pattern);
                return;
            case NodeKind::ArrayPattern:
                for (const auto& e : as<ArrayPattern>(n).elements)
                    if (e) visit(*e, ctx == Ctx::write ? Ctx::write : Ctx::pattern);
                return;
            case NodeKind::RestElement: visit(*as<RestElement>(n).target, ctx); return;
            case NodeKind::AssignPattern:
                visit(*as<AssignPattern>(n).target, ctx);
                visit(*as<AssignPattern>(n).fallback, Ctx::read);
                return;
            case NodeKind::VarDecl:
                for (const auto& d : as<VarDecl>(n).decls) {
                    visit(*d.target, Ctx::pattern);
                    if (d.init) visit(*d.init, Ctx::read);
                }
                return;
            case NodeKind::Function: {
                const auto& fn = as<FunctionNode>(n);
                for (const auto& p : fn.params) visit(*p, Ctx::pattern);
                visit(*fn.body, Ctx::read);
                return;
            }
            case NodeKind::Try: {
                const auto& t = as<TryStmt>(n);
                visit(*t.block, Ctx::read);
                if (t.param) visit(*t.param, Ctx::pattern);
                if (t.handler) visit(*t.handler, Ctx::read);
                if (t.finalizer) visit(*t.finalizer, Ctx::read);
                return;
            }
            case NodeKind::ForOf:
            case NodeKind::ForIn: {
                const auto& f = as<ForEachStmt>(n);
                visit(*f.target, f.decl_kind ? Ctx::pattern : Ctx::write);
                visit(*f.iterable, Ctx::read);
                visit(*f.body, Ctx::read);
                return;
            }
            default: for_each_child(n, [&](const Node& c) { visit(c, Ctx::read); }); return;
        }
    }

    Verdict verdict() const {
        Verdict v;
        auto add = [&](Decision d, std::string reason, Pos pos, std::string detail) {
            if (severity(d) > severity(v.decision)) v.decision = d;
            Reason r{std::move(reason), pos.line, pos.column, std::move(detail)};
            if (std::find(v.reasons.begin(), v.reasons.end(), r) == v.reasons.end()) v.reasons.push_back(std::move(r));
        };

        for (const auto& [name, pos] : globals_) {
            for (const SafetyRule& r : rules_.rules) {
                if (r.kind == RuleKind::deny_global && glob_match(r.pattern, name)) {
                    add(Decision::Deny, r.reason, pos, "global " + name);
                    break;
                }
            }
        }

        // A write site reached through an alias with several candidate
        // targets still changes one path when it runs, so candidates of one
        // site are grouped into a single key.
        std::vector<std::pair<Pos, std::set<std::string>>> per_site;
        for (const Site& s : sites_) {
            Hit h = s.dynamic ? evaluate_dynamic(rules_, s.op, s.path) : evaluate_access(rules_, s.op, s.path);
            std::string detail = std::string(op_name(s.op)) + " " + s.path + (s.dynamic ? ".<computed>" : "");
            if (h.decision != Decision::Allow) add(h.decision, h.reason, s.pos, detail);
            bool counts = s.op == Op::write || (s.op == Op::invoke && (s.dynamic || may_mutate(s.op, s.path)));
            if (!counts) continue;
            auto it = std::find_if(per_site.begin(), per_site.end(), [&](const auto& p) {
                return p.first.line == s.pos.line && p.first.column == s.pos.column;
            });
            if (it == per_site.end()) it = per_site.insert(per_site.end(), {s.pos, {}});
            it->second.insert(s.dynamic ? s.path + ".*" : s.path);
        }
        std::vector<std::pair<std::string, Pos>> writes;
        for (const auto& [pos, candidates] : per_site) {
            std::string key;
            for (const std::string& c : candidates) key += (key.empty() ? "" : "|") + c;
            if (std::none_of(writes.begin(), writes.end(), [&](const auto& w) { return w.first == key; }))
                writes.emplace_back(key, pos);
        }

        for (const SafetyRule& r : rules_.rules) {
            if (!r.min_writes || static_cast<int>(writes.size()) < *r.min_writes) continue;
            const auto& nth = writes[static_cast<std::size_t>(*r.min_writes - 1)];
            add(decision_of(r.kind), r.reason, nth.second, std::to_string(writes.size()) + " distinct state paths written");
            break;
        }

        std::stable_sort(v.reasons.begin(), v.reasons.end(), [](const Reason& a, const Reason& b) {
            return std::tie(a.line, a.column) < std::tie(b.line, b.column);
        });
        return v;
    }

    const Program& program_;
    const RuleSet& rules_;
    std::set<std::string> declared_ = {"undefined", "NaN", "Infinity", "arguments"};
    std::map<std::string, Resolved> aliases_;
    std::vector<Site> sites_;
    std::vector<std::pair<std::string, Pos>> globals_;
};

}  // namespace

json to_json(const Verdict& v) {
    json reasons = json::array();
    for (const Reason& r : v.reasons)
        reasons.push_back({{"reason", r.reason}, {"line", r.line}, {"column", r.column}, {"detail", r.detail}});
    return {{"decision", std::string(to_string(v.decision))}, {"reasons", reasons}};
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    try {
        std::string d = j.at("decision").get<std::string>();
        if (d == "Allow") v.decision = Decision::Allow;
        else if (d == "Deny") v.decision = Decision::Deny;
        else if (d == "NeedsApproval") v.decision = Decision::NeedsApproval;
        else throw ParseError("unknown decision '" + d + "'");
        for (const json& r : j.at("reasons"))
            v.reasons.push_back({r.at("reason").get<std::string>(), r.at("line").get<int>(), r.at("column").get<int>(),
                                 r.value("detail", "")});
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed verdict: ") + e.what());
    }
    return v;
}

Verdict analyze(const sandbox::ActionCode& code, const RuleSet& rules) {
    if (code.language_tag != "js") throw UnsupportedLanguage("unsupported action code language '" + code.language_tag + "'");
    auto program = script::parse(code.source);
    return Analyzer(*program, rules).run();
}

GuardDecision guard_check(const BridgeRequest& call, const RuleSet& rules, bool approved) {
    Op op = call.kind == AccessKind::write ? Op::write : call.kind == AccessKind::invoke ? Op::invoke : Op::read;
    Hit h = evaluate_access(rules, op, call.path);
    switch (h.decision) {
        case Decision::Allow: return {};
        case Decision::Deny: return {false, h.reason + " (" + std::string(op_name(op)) + " " + call.path + ")"};
        case Decision::NeedsApproval:
            if (approved) return {};
            return {false, "requires approval: " + h.reason + " (" + std::string(op_name(op)) + " " + call.path + ")"};
    }
    return {};
}

sandbox::Guard make_guard(RuleSet rules, bool approved) {
    return [rules = std::move(rules), approved](const BridgeRequest& call) -> std::optional<std::string> {
        GuardDecision d = guard_check(call, rules, approved);
        if (d.allowed) return std::nullopt;
        return d.reason;
    };
}

}  // namespace jitagent::safety
