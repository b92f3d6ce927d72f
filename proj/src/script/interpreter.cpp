#include "jitagent/script/interpreter.hpp"

#include <cmath>
#include <unordered_set>

#include "jitagent/common.hpp"
#include "jitagent/script/parser.hpp"
#include "runtime.hpp"

namespace jitagent::script {

std::string_view to_string(LimitKind kind) {
    switch (kind) {
        case LimitKind::steps: return "step budget exhausted";
        case LimitKind::timeout: return "wall-clock timeout";
        case LimitKind::output: return "console output budget exhausted";
        case LimitKind::memory: return "memory limit exceeded";
        case LimitKind::call_depth: return "maximum call depth exceeded";
    }
    return "limit exceeded";
}

Interpreter::Interpreter(Bridge& bridge, Limits limits) : bridge_(bridge), limits_(limits) {}
Interpreter::~Interpreter() = default;

Outcome Interpreter::run(std::string_view source) {
    std::unique_ptr<Program> program;
    try {
        program = parse(source);
    } catch (const ScriptSyntaxError& e) {
        Outcome out;
        out.kind = Outcome::Kind::syntax_error;
        out.error_name = "SyntaxError";
        out.error_message = e.bare_message();
        out.pos = e.pos();
        return out;
    }
    return run(*program);
}

Outcome Interpreter::run(const Program& program) {
    detail::Runtime rt(bridge_, limits_);
    return rt.run(program);
}

namespace detail {
namespace {

struct EnvScope {
    EnvScope(EnvRef& slot, EnvRef next) : slot_(slot), saved_(std::move(slot)) { slot_ = std::move(next); }
    ~EnvScope() { slot_ = std::move(saved_); }
    EnvScope(const EnvScope&) = delete;
    EnvScope& operator=(const EnvScope&) = delete;

private:
    EnvRef& slot_;
    EnvRef saved_;
};

bool is_nullish(const Value& v) {
    return std::holds_alternative<Undefined>(v) || std::holds_alternative<Null>(v);
}

bool block_needs_scope(const std::vector<NodePtr>& body) {
    for (const NodePtr& s : body) {
        if (s->kind == NodeKind::FunctionDecl) return true;
        if (s->kind == NodeKind::VarDecl && as<VarDecl>(*s).decl_kind != DeclKind::Var) return true;
    }
    return false;
}

std::int32_t to_int32(double d) {
    if (!std::isfinite(d)) return 0;
    double t = std::trunc(d);
    double m = std::fmod(t, 4294967296.0);
    if (m < 0) m += 4294967296.0;
    auto u = static_cast<std::uint32_t>(m);
    return static_cast<std::int32_t>(u);
}

std::string js_error_name(const std::string& kind) {
    if (kind == "ArityError" || kind == "ArgumentTypeError" || kind == "UnknownPath") return "TypeError";
    return "Error";
}

}  // namespace

Runtime::Runtime(Bridge& bridge, const Limits& limits) : bridge_(bridge), limits_(limits) {
    deadline_ = std::chrono::steady_clock::now() + limits_.wall_timeout;
    global_ = std::make_shared<Env>(nullptr);
    global_->function_scope = true;
    global_->has_this = true;
    env_ = global_;
    install_globals();
}

Runtime::~Runtime() { release_all(); }

void Runtime::release_all() {
    // Break reference cycles (closures capturing their own scope, self-referencing objects).
    for (auto& w : envs_) {
        if (auto e = w.lock()) {
            e->vars.clear();
            e->parent.reset();
            e->this_value = Undefined{};
        }
    }
    for (auto& w : objects_) {
        if (auto o = w.lock()) {
            o->props.clear();
            o->items.clear();
            o->closure.reset();
            o->native = nullptr;
            o->settled = Undefined{};
            o->lexical_this = Undefined{};
        }
    }
    rejected_.clear();
    if (global_) {
        global_->vars.clear();
        global_.reset();
    }
    env_.reset();
}

void Runtime::track(const ObjectRef& o) {
    objects_.push_back(o);
    if (objects_.size() >= compact_at_) {
        std::erase_if(objects_, [](const std::weak_ptr<Object>& w) { return w.expired(); });
        if (objects_.size() > limits_.max_live_objects) throw LimitAbort{LimitKind::memory};
        compact_at_ = std::max<std::size_t>(4096, objects_.size() * 2);
    }
}

void Runtime::track(const EnvRef& e) {
    envs_.push_back(e);
    if (envs_.size() >= 4096 && envs_.size() % 4096 == 0) {
        std::erase_if(envs_, [](const std::weak_ptr<Env>& w) { return w.expired(); });
        if (envs_.size() > limits_.max_live_objects) throw LimitAbort{LimitKind::memory};
    }
}

void Runtime::tick() {
    ++steps_;
    if (steps_ > limits_.step_budget) throw LimitAbort{LimitKind::steps};
    if ((steps_ & 1023U) == 0) {
        if (limits_.cancel != nullptr && limits_.cancel->load(std::memory_order_relaxed))
            throw LimitAbort{LimitKind::timeout};
        if (std::chrono::steady_clock::now() > deadline_) throw LimitAbort{LimitKind::timeout};
    }
}

void Runtime::check_string(const std::string& s) {
    if (s.size() > limits_.max_string_length) throw LimitAbort{LimitKind::memory};
}

void Runtime::check_array(std::size_t n) {
    if (n > limits_.max_array_length) throw LimitAbort{LimitKind::memory};
}

void Runtime::emit_console(const std::string& line) {
    output_bytes_ += line.size() + 1;
    if (output_bytes_ > limits_.output_budget) throw LimitAbort{LimitKind::output};
    console_.push_back(line);
}

ObjectRef Runtime::new_object(Object::Kind kind) {
    auto o = std::make_shared<Object>(kind);
    track(o);
    return o;
}

ObjectRef Runtime::new_array(std::vector<Value> items) {
    check_array(items.size());
    auto o = new_object(Object::Kind::array);
    o->items = std::move(items);
    return o;
}

ObjectRef Runtime::new_native(std::string name, NativeFn fn, bool constructor) {
    auto o = new_object(Object::Kind::native);
    o->name = std::move(name);
    o->native = std::move(fn);
    o->constructor = constructor;
    return o;
}

ObjectRef Runtime::new_promise(Object::PromiseState state, Value v) {
    auto p = new_object(Object::Kind::promise);
    p->promise_state = state;
    p->settled = std::move(v);
    if (state == Object::PromiseState::rejected) rejected_.push_back(p);
    return p;
}

ObjectRef Runtime::make_error(const std::string& name, const std::string& message) {
    auto e = new_object(Object::Kind::error);
    e->set("name", name);
    e->set("message", message);
    return e;
}

void Runtime::throw_error(const std::string& name, const std::string& message) {
    throw JsThrow{make_error(name, message), current_pos_};
}

// ---------------------------------------------------------------------------
// program

Outcome Runtime::run(const Program& program) {
    Outcome out;
    auto script_env = std::make_shared<Env>(global_);
    script_env->function_scope = true;
    track(script_env);
    EnvScope scope(env_, script_env);
    Value last = Undefined{};
    try {
        hoist_var_names(program, env_);
        hoist(program.body, env_);
        for (const NodePtr& s : program.body) {
            if (s->kind == NodeKind::ExprStmt) {
                tick();
                current_pos_ = s->pos;
                last = eval(*as<ExprStmt>(*s).expr);
                continue;
            }
            Completion c = exec_statement(*s);
            if (c.type != Completion::Type::normal) {
                if (c.type == Completion::Type::ret) {
                    throw JsThrow{make_error("SyntaxError", "Illegal return statement"), s->pos};
                }
                throw JsThrow{make_error("SyntaxError", "Illegal break or continue statement"), s->pos};
            }
        }
        for (const ObjectRef& p : rejected_) {
            if (!p->handled) throw JsThrow{p->settled, current_pos_};
        }
        out.kind = Outcome::Kind::ok;
        if (!std::holds_alternative<Undefined>(last)) {
            try {
                out.completion = to_json(last);
            } catch (const JsThrow&) {
                out.completion = nullptr;
            }
        }
    } catch (const JsThrow& t) {
        out.kind = Outcome::Kind::thrown;
        out.pos = t.pos;
        if (const auto* o = std::get_if<ObjectRef>(&t.value); o != nullptr && (*o)->kind == Object::Kind::error) {
            const Value* n = (*o)->find("name");
            const Value* m = (*o)->find("message");
            out.error_name = n != nullptr ? to_string(*n) : "Error";
            out.error_message = m != nullptr ? to_string(*m) : "";
        } else {
            out.error_name.clear();
            try {
                out.error_message = to_string(t.value);
            } catch (...) {
                out.error_message = "<unprintable value>";
            }
        }
    } catch (const LimitAbort& l) {
        out.kind = Outcome::Kind::limit_exceeded;
        out.limit = l.kind;
        out.error_message = std::string(script::to_string(l.kind));
        out.pos = current_pos_;
    } catch (const GuardDenial& g) {
        out.kind = Outcome::Kind::guard_denied;
        out.error_message = g.what();
        out.pos = current_pos_;
    }
    out.console = std::move(console_);
    out.steps = steps_;
    return out;
}

// ---------------------------------------------------------------------------
// scopes

void Runtime::hoist_var_names(const Node& n, const EnvRef& env) {
    switch (n.kind) {
        case NodeKind::VarDecl: {
            const auto& d = as<VarDecl>(n);
            if (d.decl_kind != DeclKind::Var) return;
            std::function<void(const Node&)> names = [&](const Node& p) {
                switch (p.kind) {
                    case NodeKind::Identifier: {
                        const auto& name = as<Identifier>(p).name;
                        if (env->vars.find(name) == env->vars.end()) env->vars[name] = Binding{Undefined{}, false, true};
                        break;
                    }
                    case NodeKind::AssignPattern: names(*as<AssignPattern>(p).target); break;
                    case NodeKind::RestElement: names(*as<RestElement>(p).target); break;
                    case NodeKind::ArrayPattern:
                        for (const auto& e : as<ArrayPattern>(p).elements)
                            if (e) names(*e);
                        break;
                    case NodeKind::ObjectPattern:
                        for (const auto& pp : as<ObjectPattern>(p).props) names(*pp.target);
                        if (as<ObjectPattern>(p).rest) names(*as<ObjectPattern>(p).rest);
                        break;
                    default: break;
                }
            };
            for (const auto& decl : d.decls) names(*decl.target);
            return;
        }
        case NodeKind::Program:
        case NodeKind::Block:
            for (const auto& s : as<BlockStmt>(n).body) hoist_var_names(*s, env);
            return;
        case NodeKind::If: {
            const auto& s = as<IfStmt>(n);
            hoist_var_names(*s.consequent, env);
            if (s.alternate) hoist_var_names(*s.alternate, env);
            return;
        }
        case NodeKind::For: {
            const auto& s = as<ForStmt>(n);
            if (s.init) hoist_var_names(*s.init, env);
            hoist_var_names(*s.body, env);
            return;
        }
        case NodeKind::ForOf:
        case NodeKind::ForIn: {
            const auto& s = as<ForEachStmt>(n);
            if (s.decl_kind == DeclKind::Var) {
                VarDecl fake(s.pos, DeclKind::Var);
                (void)fake;
                std::function<void(const Node&)> names = [&](const Node& p) {
                    if (p.kind == NodeKind::Identifier) {
                        const auto& name = as<Identifier>(p).name;
                        if (env->vars.find(name) == env->vars.end()) env->vars[name] = Binding{Undefined{}, false, true};
                    }
                };
                names(*s.target);
            }
            hoist_var_names(*s.body, env);
            return;
        }
        case NodeKind::While:
        case NodeKind::DoWhile: hoist_var_names(*as<WhileStmt>(n).body, env); return;
        case NodeKind::Try: {
            const auto& s = as<TryStmt>(n);
            hoist_var_names(*s.block, env);
            if (s.handler) hoist_var_names(*s.handler, env);
            if (s.finalizer) hoist_var_names(*s.finalizer, env);
            return;
        }
        case NodeKind::Switch:
            for (const auto& c : as<SwitchStmt>(n).cases)
                for (const auto& s : c.body) hoist_var_names(*s, env);
            return;
        default: return;
    }
}

void Runtime::hoist(const std::vector<NodePtr>& body, const EnvRef& env) {
    EnvScope scope(env_, env);
    for (const NodePtr& s : body) {
        if (s->kind != NodeKind::FunctionDecl) continue;
        const auto& fd = as<FunctionDecl>(*s);
        env->vars[fd.fn->name] = Binding{make_function(*fd.fn), false, true};
    }
}

void Runtime::declare(const EnvRef& env, const std::string& name, Value v, DeclKind kind) {
    if (kind == DeclKind::Var) {
        Env* e = env.get();
        while (e != nullptr && !e->function_scope) e = e->parent.get();
        if (e == nullptr) e = env.get();
        e->vars[name] = Binding{std::move(v), false, true};
        return;
    }
    auto it = env->vars.find(name);
    if (it != env->vars.end()) throw JsThrow{make_error("SyntaxError", "Identifier '" + name + "' has already been declared"), current_pos_};
    env->vars.emplace(name, Binding{std::move(v), kind == DeclKind::Const, true});
}

Binding* Runtime::lookup(const std::string& name) {
    for (Env* e = env_.get(); e != nullptr; e = e->parent.get()) {
        auto it = e->vars.find(name);
        if (it != e->vars.end()) return &it->second;
    }
    return nullptr;
}

Value Runtime::read_identifier(const Identifier& id) {
    Binding* b = lookup(id.name);
    if (b == nullptr) {
        current_pos_ = id.pos;
        throw_error("ReferenceError", id.name + " is not defined");
    }
    if (!b->initialized) {
        current_pos_ = id.pos;
        throw_error("ReferenceError", "Cannot access '" + id.name + "' before initialization");
    }
    return b->value;
}

void Runtime::assign_identifier(const std::string& name, Value v, Pos pos) {
    Binding* b = lookup(name);
    current_pos_ = pos;
    if (b == nullptr) throw_error("ReferenceError", name + " is not defined");
    if (b->is_const) throw_error("TypeError", "Assignment to constant variable.");
    b->value = std::move(v);
}

void Runtime::bind_pattern(const Node& pattern, Value v, const EnvRef& env, std::optional<DeclKind> decl) {
    current_pos_ = pattern.pos;
    switch (pattern.kind) {
        case NodeKind::Identifier: {
            const auto& name = as<Identifier>(pattern).name;
            if (decl) declare(env, name, std::move(v), *decl);
            else assign_identifier(name, std::move(v), pattern.pos);
            return;
        }
        case NodeKind::Member: {
            const auto& m = as<MemberExpr>(pattern);
            Value obj = eval(*m.object);
            std::string key = member_key(m);
            set_member(obj, key, std::move(v), m.pos, m.object.get());
            return;
        }
        case NodeKind::AssignPattern: {
            const auto& ap = as<AssignPattern>(pattern);
            if (std::holds_alternative<Undefined>(v)) {
                EnvScope scope(env_, env);
                v = eval(*ap.fallback);
            }
            bind_pattern(*ap.target, std::move(v), env, decl);
            return;
        }
        case NodeKind::ArrayPattern: {
            const auto& ap = as<ArrayPattern>(pattern);
            std::vector<Value> items = iterate(v, pattern.pos);
            for (std::size_t i = 0; i < ap.elements.size(); ++i) {
                const NodePtr& el = ap.elements[i];
                if (!el) continue;
                if (el->kind == NodeKind::RestElement) {
                    std::vector<Value> rest;
                    for (std::size_t k = i; k < items.size(); ++k) rest.push_back(items[k]);
                    bind_pattern(*as<RestElement>(*el).target, new_array(std::move(rest)), env, decl);
                    break;
                }
                bind_pattern(*el, i < items.size() ? items[i] : Value{Undefined{}}, env, decl);
            }
            return;
        }
        case NodeKind::ObjectPattern: {
            const auto& op = as<ObjectPattern>(pattern);
            if (is_nullish(v))
                throw_error("TypeError", "Cannot destructure '" + to_string(v) + "' as it is " + to_string(v) + ".");
            std::vector<std::string> used;
            for (const auto& prop : op.props) {
                std::string key = prop.key;
                if (prop.computed_key) {
                    EnvScope scope(env_, env);
                    key = to_string(eval(*prop.computed_key));
                }
                used.push_back(key);
                Value field = get_member(v, key, prop.pos, nullptr);
                bind_pattern(*prop.target, std::move(field), env, decl);
            }
            if (op.rest) {
                auto rest = new_object();
                if (const auto* o = std::get_if<ObjectRef>(&v); o != nullptr && (*o)->kind == Object::Kind::plain) {
                    for (const auto& [k, val] : (*o)->props)
                        if (std::find(used.begin(), used.end(), k) == used.end()) rest->set(k, val);
                }
                bind_pattern(*op.rest, rest, env, decl);
            }
            return;
        }
        default: throw_error("SyntaxError", "Invalid destructuring target");
    }
}

// ---------------------------------------------------------------------------
// statements

Completion Runtime::exec(const Node& n, const EnvRef& env) {
    EnvScope scope(env_, env);
    return exec_statement(n);
}

Completion Runtime::exec_block(const std::vector<NodePtr>& body, const EnvRef& env) {
    EnvScope scope(env_, env);
    for (const NodePtr& s : body) {
        Completion c = exec_statement(*s);
        if (c.type != Completion::Type::normal) return c;
    }
    return {};
}

Completion Runtime::exec_statement(const Node& n) {
    tick();
    current_pos_ = n.pos;
    switch (n.kind) {
        case NodeKind::ExprStmt: eval(*as<ExprStmt>(n).expr); return {};
        case NodeKind::Empty:
        case NodeKind::FunctionDecl: return {};
        case NodeKind::VarDecl: {
            const auto& d = as<VarDecl>(n);
            for (const auto& decl : d.decls) {
                if (!decl.init) {
                    if (d.decl_kind == DeclKind::Const) throw_error("SyntaxError", "Missing initializer in const declaration");
                    if (d.decl_kind == DeclKind::Var && decl.target->kind == NodeKind::Identifier) {
                        // already hoisted; `var x;` keeps the current value
                        continue;
                    }
                    bind_pattern(*decl.target, Undefined{}, env_, d.decl_kind);
                    continue;
                }
                Value v = eval(*decl.init);
                if (decl.target->kind == NodeKind::Identifier) {
                    if (auto* o = std::get_if<ObjectRef>(&v); o != nullptr && (*o)->kind == Object::Kind::function && (*o)->name.empty())
                        (*o)->name = as<Identifier>(*decl.target).name;
                }
                bind_pattern(*decl.target, std::move(v), env_, d.decl_kind);
            }
            return {};
        }
        case NodeKind::Return: {
            const auto& r = as<ReturnStmt>(n);
            Completion c;
            c.type = Completion::Type::ret;
            if (r.arg) c.value = eval(*r.arg);
            return c;
        }
        case NodeKind::If: {
            const auto& s = as<IfStmt>(n);
            if (truthy(eval(*s.test))) return exec_statement(*s.consequent);
            if (s.alternate) return exec_statement(*s.alternate);
            return {};
        }
        case NodeKind::Block: {
            const auto& b = as<BlockStmt>(n);
            if (!block_needs_scope(b.body)) return exec_block(b.body, env_);
            auto env = std::make_shared<Env>(env_);
            track(env);
            hoist(b.body, env);
            return exec_block(b.body, env);
        }
        case NodeKind::For: {
            const auto& s = as<ForStmt>(n);
            bool lexical = s.init && s.init->kind == NodeKind::VarDecl && as<VarDecl>(*s.init).decl_kind != DeclKind::Var;
            auto loop_env = lexical ? std::make_shared<Env>(env_) : env_;
            if (lexical) track(loop_env);
            EnvScope scope(env_, loop_env);
            if (s.init) exec_statement(*s.init);
            // Fresh per-iteration bindings so closures capture each value.
            auto next_iteration = [&] {
                if (!lexical) return;
                auto iter = std::make_shared<Env>(loop_env->parent);
                iter->vars = env_->vars;
                track(iter);
                env_ = iter;
            };
            next_iteration();
            for (;;) {
                tick();
                if (s.test && !truthy(eval(*s.test))) break;
                Completion c = exec_statement(*s.body);
                if (c.type == Completion::Type::brk) break;
                if (c.type == Completion::Type::ret) return c;
                next_iteration();
                if (s.update) eval(*s.update);
            }
            return {};
        }
        case NodeKind::ForOf:
        case NodeKind::ForIn: {
            const auto& s = as<ForEachStmt>(n);
            Value iterable = eval(*s.iterable);
            std::vector<Value> items;
            if (n.kind == NodeKind::ForIn) {
                if (const auto* o = std::get_if<ObjectRef>(&iterable)) {
                    const ObjectRef& obj = *o;
                    if (obj->kind == Object::Kind::array) {
                        for (std::size_t i = 0; i < obj->items.size(); ++i) items.emplace_back(std::to_string(i));
                    } else if (obj->kind == Object::Kind::host) {
                        for (auto& m : bridge_.members(obj->host_path)) items.emplace_back(m);
                    } else {
                        for (const auto& [k, v] : obj->props) items.emplace_back(k);
                    }
                } else if (const auto* str = std::get_if<std::string>(&iterable)) {
                    for (std::size_t i = 0; i < str->size(); ++i) items.emplace_back(std::to_string(i));
                }
            } else {
                items = iterate(iterable, s.iterable->pos);
            }
            for (Value& item : items) {
                tick();
                EnvRef body_env = env_;
                if (s.decl_kind && *s.decl_kind != DeclKind::Var) {
                    body_env = std::make_shared<Env>(env_);
                    track(body_env);
                }
                bind_pattern(*s.target, std::move(item), body_env, s.decl_kind);
                Completion c = exec(*s.body, body_env);
                if (c.type == Completion::Type::brk) break;
                if (c.type == Completion::Type::ret) return c;
            }
            return {};
        }
        case NodeKind::While: {
            const auto& s = as<WhileStmt>(n);
            for (;;) {
                tick();
                if (!truthy(eval(*s.test))) break;
                Completion c = exec_statement(*s.body);
                if (c.type == Completion::Type::brk) break;
                if (c.type == Completion::Type::ret) return c;
            }
            return {};
        }
        case NodeKind::DoWhile: {
            const auto& s = as<WhileStmt>(n);
            for (;;) {
                tick();
                Completion c = exec_statement(*s.body);
                if (c.type == Completion::Type::brk) break;
                if (c.type == Completion::Type::ret) return c;
                if (!truthy(eval(*s.test))) break;
            }
            return {};
        }
        case NodeKind::Break: return Completion{Completion::Type::brk, Undefined{}};
        case NodeKind::Continue: return Completion{Completion::Type::cont, Undefined{}};
        case NodeKind::Throw: {
            const auto& t = as<ThrowStmt>(n);
            Value v = eval(*t.arg);
            throw JsThrow{std::move(v), n.pos};
        }
        case NodeKind::Try: {
            const auto& t = as<TryStmt>(n);
            Completion result;
            std::optional<JsThrow> pending;
            try {
                result = exec_statement(*t.block);
            } catch (JsThrow& thrown) {
                if (t.handler) {
                    try {
                        auto env = std::make_shared<Env>(env_);
                        track(env);
                        if (t.param) bind_pattern(*t.param, thrown.value, env, DeclKind::Let);
                        result = exec(*t.handler, env);
                    } catch (JsThrow& again) {
                        if (!t.finalizer) throw;
                        pending = std::move(again);
                    }
                } else {
                    pending = std::move(thrown);
                }
            }
            if (t.finalizer) {
                Completion f = exec_statement(*t.finalizer);
                if (f.type != Completion::Type::normal) return f;
            }
            if (pending) throw *pending;
            return result;
        }
        case NodeKind::Switch: {
            const auto& s = as<SwitchStmt>(n);
            Value d = eval(*s.discriminant);
            auto env = std::make_shared<Env>(env_);
            track(env);
            EnvScope scope(env_, env);
            std::optional<std::size_t> start;
            for (std::size_t i = 0; i < s.cases.size() && !start; ++i) {
                if (s.cases[i].test && strict_equals(d, eval(*s.cases[i].test))) start = i;
            }
            if (!start) {
                for (std::size_t i = 0; i < s.cases.size(); ++i)
                    if (!s.cases[i].test) start = i;
            }
            if (!start) return {};
            for (std::size_t i = *start; i < s.cases.size(); ++i) {
                for (const NodePtr& st : s.cases[i].body) {
                    Completion c = exec_statement(*st);
                    if (c.type == Completion::Type::brk) return {};
                    if (c.type != Completion::Type::normal) return c;
                }
            }
            return {};
        }
        default: eval(n); return {};
    }
}

// ---------------------------------------------------------------------------
// expressions

std::string Runtime::describe(const Node& n) const {
    switch (n.kind) {
        case NodeKind::Identifier: return as<Identifier>(n).name;
        case NodeKind::This: return "this";
        case NodeKind::Member: {
            const auto& m = as<MemberExpr>(n);
            std::string base = describe(*m.object);
            if (m.is_computed()) {
                if (m.computed->kind == NodeKind::String) return base + "['" + as<StringLit>(*m.computed).value + "']";
                if (m.computed->kind == NodeKind::Number) return base + "[" + number_to_string(as<NumberLit>(*m.computed).value) + "]";
                return base + "[...]";
            }
            return base + (m.optional ? "?." : ".") + m.property;
        }
        case NodeKind::Call: return describe(*as<CallExpr>(n).callee) + "(...)";
        default: return "(intermediate value)";
    }
}

std::string Runtime::member_key(const MemberExpr& m) {
    if (!m.is_computed()) return m.property;
    Value k = eval(*m.computed);
    if (const auto* d = std::get_if<double>(&k)) return number_to_string(*d);
    return to_string(k);
}

Value Runtime::eval(const Node& n) {
    tick();
    switch (n.kind) {
        case NodeKind::Number: return as<NumberLit>(n).value;
        case NodeKind::String: return as<StringLit>(n).value;
        case NodeKind::Boolean: return as<BooleanLit>(n).value;
        case NodeKind::Null: return Null{};
        case NodeKind::Template: {
            const auto& t = as<TemplateLit>(n);
            std::string out = t.quasis.empty() ? std::string() : t.quasis[0];
            for (std::size_t i = 0; i < t.exprs.size(); ++i) {
                out += to_string(eval(*t.exprs[i]));
                if (i + 1 < t.quasis.size()) out += t.quasis[i + 1];
                check_string(out);
            }
            return out;
        }
        case NodeKind::Identifier: return read_identifier(as<Identifier>(n));
        case NodeKind::This: {
            for (Env* e = env_.get(); e != nullptr; e = e->parent.get())
                if (e->has_this) return e->this_value;
            return Undefined{};
        }
        case NodeKind::Array: {
            std::vector<Value> items;
            for (const NodePtr& el : as<ArrayLit>(n).elements) {
                if (el->kind == NodeKind::Spread) {
                    for (Value& v : iterate(eval(*as<SpreadExpr>(*el).arg), el->pos)) items.push_back(std::move(v));
                } else {
                    items.push_back(eval(*el));
                }
                check_array(items.size());
            }
            return new_array(std::move(items));
        }
        case NodeKind::Object: {
            auto obj = new_object();
            for (const Property& p : as<ObjectLit>(n).props) {
                if (p.spread) {
                    Value src = eval(*p.value);
                    if (const auto* o = std::get_if<ObjectRef>(&src)) {
                        if ((*o)->kind == Object::Kind::array) {
                            for (std::size_t i = 0; i < (*o)->items.size(); ++i) obj->set(std::to_string(i), (*o)->items[i]);
                        } else {
                            for (const auto& [k, v] : (*o)->props) obj->set(k, v);
                        }
                    } else if (const auto* s = std::get_if<std::string>(&src)) {
                        for (std::size_t i = 0; i < s->size(); ++i) obj->set(std::to_string(i), std::string(1, (*s)[i]));
                    }
                    continue;
                }
                std::string key = p.key;
                if (p.computed_key) {
                    Value k = eval(*p.computed_key);
                    key = std::holds_alternative<double>(k) ? number_to_string(std::get<double>(k)) : to_string(k);
                }
                Value v = eval(*p.value);
                if (auto* f = std::get_if<ObjectRef>(&v); f != nullptr && (*f)->kind == Object::Kind::function && (*f)->name.empty())
                    (*f)->name = key;
                obj->set(key, std::move(v));
            }
            return obj;
        }
        case NodeKind::Function: return make_function(as<FunctionNode>(n));
        case NodeKind::Member:
        case NodeKind::Call: {
            ChainResult r = eval_chain(n);
            if (r.short_circuit) return Undefined{};
            return std::move(r.value);
        }
        case NodeKind::New: {
            const auto& c = as<CallExpr>(n);
            Value ctor = eval(*c.callee);
            std::vector<Value> args = eval_args(c.args);
            current_pos_ = n.pos;
            if (const auto* o = std::get_if<ObjectRef>(&ctor); o == nullptr || !(*o)->callable())
                throw_error("TypeError", describe(*c.callee) + " is not a constructor");
            return construct(ctor, args, n.pos);
        }
        case NodeKind::Unary: return eval_unary(as<UnaryExpr>(n));
        case NodeKind::Update: return eval_update(as<UpdateExpr>(n));
        case NodeKind::Binary: {
            const auto& b = as<BinaryExpr>(n);
            Value l = eval(*b.left);
            Value r = eval(*b.right);
            current_pos_ = n.pos;
            return eval_binary(b.op, l, r, n.pos);
        }
        case NodeKind::Logical: {
            const auto& b = as<BinaryExpr>(n);
            Value l = eval(*b.left);
            if (b.op == "&&") return truthy(l) ? eval(*b.right) : l;
            if (b.op == "||") return truthy(l) ? l : eval(*b.right);
            return is_nullish(l) ? eval(*b.right) : l;
        }
        case NodeKind::Conditional: {
            const auto& c = as<ConditionalExpr>(n);
            return truthy(eval(*c.test)) ? eval(*c.consequent) : eval(*c.alternate);
        }
        case NodeKind::Assign: return eval_assign(as<AssignExpr>(n));
        case NodeKind::Sequence: {
            Value last;
            for (const NodePtr& e : as<SequenceExpr>(n).exprs) last = eval(*e);
            return last;
        }
        case NodeKind::Await: {
            Value v = eval(*as<AwaitExpr>(n).arg);
            return await_value(v, n.pos);
        }
        case NodeKind::Spread:
            current_pos_ = n.pos;
            throw_error("SyntaxError", "Unexpected spread element");
        default:
            current_pos_ = n.pos;
            throw_error("SyntaxError", "Unexpected node in expression position");
    }
}

std::vector<Value> Runtime::eval_args(const std::vector<NodePtr>& args) {
    std::vector<Value> out;
    out.reserve(args.size());
    for (const NodePtr& a : args) {
        if (a->kind == NodeKind::Spread) {
            for (Value& v : iterate(eval(*as<SpreadExpr>(*a).arg), a->pos)) out.push_back(std::move(v));
        } else {
            out.push_back(eval(*a));
        }
    }
    return out;
}

Runtime::ChainResult Runtime::eval_chain(const Node& n) {
    if (n.kind == NodeKind::Member) {
        const auto& m = as<MemberExpr>(n);
        ChainResult obj = eval_chain(*m.object);
        if (obj.short_circuit) return obj;
        if (m.optional && is_nullish(obj.value)) return ChainResult{Undefined{}, Undefined{}, true};
        std::string key = member_key(m);
        current_pos_ = n.pos;
        Value v = get_member(obj.value, key, n.pos, m.object.get());
        return ChainResult{std::move(v), std::move(obj.value), false};
    }
    if (n.kind == NodeKind::Call) {
        const auto& c = as<CallExpr>(n);
        if (c.callee->kind == NodeKind::Member) {
            const auto& m = as<MemberExpr>(*c.callee);
            ChainResult obj = eval_chain(*m.object);
            if (obj.short_circuit) return obj;
            if (m.optional && is_nullish(obj.value)) return ChainResult{Undefined{}, Undefined{}, true};
            std::string key = member_key(m);
            if (c.optional) {
                current_pos_ = n.pos;
                Value fn = get_member(obj.value, key, n.pos, m.object.get());
                if (is_nullish(fn)) return ChainResult{Undefined{}, Undefined{}, true};
                std::vector<Value> args = eval_args(c.args);
                return ChainResult{call(fn, obj.value, args, n.pos), Undefined{}, false};
            }
            std::vector<Value> args = eval_args(c.args);
            current_pos_ = n.pos;
            Value v = call_method(obj.value, key, args, n.pos, m.object.get());
            return ChainResult{std::move(v), Undefined{}, false};
        }
        ChainResult fn = eval_chain(*c.callee);
        if (fn.short_circuit) return fn;
        if (c.optional && is_nullish(fn.value)) return ChainResult{Undefined{}, Undefined{}, true};
        std::vector<Value> args = eval_args(c.args);
        current_pos_ = n.pos;
        const auto* o = std::get_if<ObjectRef>(&fn.value);
        if (o == nullptr || !(*o)->callable()) throw_error("TypeError", describe(*c.callee) + " is not a function");
        return ChainResult{call(fn.value, Undefined{}, args, n.pos), Undefined{}, false};
    }
    return ChainResult{eval(n), Undefined{}, false};
}

Value Runtime::eval_assign(const AssignExpr& a) {
    const std::string& op = a.op;
    auto combine = [&](const Value& current) -> std::optional<Value> {
        if (op == "&&=") return truthy(current) ? std::optional<Value>(eval(*a.value)) : std::nullopt;
        if (op == "||=") return truthy(current) ? std::nullopt : std::optional<Value>(eval(*a.value));
        if (op == "?\?=") return is_nullish(current) ? std::optional<Value>(eval(*a.value)) : std::nullopt;
        Value rhs = eval(*a.value);
        current_pos_ = a.pos;
        return eval_binary(op.substr(0, op.size() - 1), current, rhs, a.pos);
    };
    if (a.target->kind == NodeKind::Identifier) {
        const auto& id = as<Identifier>(*a.target);
        if (op == "=") {
            Value v = eval(*a.value);
            if (auto* f = std::get_if<ObjectRef>(&v); f != nullptr && (*f)->kind == Object::Kind::function && (*f)->name.empty())
                (*f)->name = id.name;
            assign_identifier(id.name, v, a.pos);
            return v;
        }
        Value current = read_identifier(id);
        std::optional<Value> next = combine(current);
        if (!next) return current;
        assign_identifier(id.name, *next, a.pos);
        return *next;
    }
    const auto& m = as<MemberExpr>(*a.target);
    Value obj = eval(*m.object);
    std::string key = member_key(m);
    if (op == "=") {
        Value v = eval(*a.value);
        current_pos_ = a.pos;
        set_member(obj, key, v, a.pos, m.object.get());
        return v;
    }
    current_pos_ = a.pos;
    Value current = get_member(obj, key, a.pos, m.object.get());
    std::optional<Value> next = combine(current);
    if (!next) return current;
    current_pos_ = a.pos;
    set_member(obj, key, *next, a.pos, m.object.get());
    return *next;
}

Value Runtime::eval_update(const UpdateExpr& u) {
    double delta = u.op == "++" ? 1 : -1;
    if (u.arg->kind == NodeKind::Identifier) {
        const auto& id = as<Identifier>(*u.arg);
        double old = to_number(read_identifier(id));
        assign_identifier(id.name, old + delta, u.pos);
        return u.prefix ? old + delta : old;
    }
    const auto& m = as<MemberExpr>(*u.arg);
    Value obj = eval(*m.object);
    std::string key = member_key(m);
    current_pos_ = u.pos;
    double old = to_number(get_member(obj, key, u.pos, m.object.get()));
    set_member(obj, key, old + delta, u.pos, m.object.get());
    return u.prefix ? old + delta : old;
}

Value Runtime::eval_unary(const UnaryExpr& u) {
    if (u.op == "typeof") {
        if (u.arg->kind == NodeKind::Identifier && lookup(as<Identifier>(*u.arg).name) == nullptr) return std::string("undefined");
        return type_of(eval(*u.arg));
    }
    if (u.op == "delete") {
        if (u.arg->kind == NodeKind::Member) {
            const auto& m = as<MemberExpr>(*u.arg);
            Value obj = eval(*m.object);
            std::string key = member_key(m);
            if (auto* o = std::get_if<ObjectRef>(&obj)) {
                if ((*o)->kind == Object::Kind::host) {
                    current_pos_ = u.pos;
                    throw_error("TypeError", "Cannot delete property '" + key + "' of bridge object " + (*o)->host_path);
                }
                (*o)->erase(key);
            }
        }
        return true;
    }
    Value v = eval(*u.arg);
    if (u.op == "!") return !truthy(v);
    if (u.op == "-") return -to_number(v);
    if (u.op == "+") return to_number(v);
    if (u.op == "~") return static_cast<double>(~to_int32(to_number(v)));
    return Undefined{};  // void
}

Value Runtime::eval_binary(const std::string& op, const Value& l, const Value& r, Pos pos) {
    current_pos_ = pos;
    if (op == "+") {
        bool l_num = std::holds_alternative<double>(l) || std::holds_alternative<bool>(l) || is_nullish(l);
        bool r_num = std::holds_alternative<double>(r) || std::holds_alternative<bool>(r) || is_nullish(r);
        if (l_num && r_num) return to_number(l) + to_number(r);
        std::string s = to_string(l);
        s += to_string(r);
        check_string(s);
        return s;
    }
    if (op == "-") return to_number(l) - to_number(r);
    if (op == "*") return to_number(l) * to_number(r);
    if (op == "/") return to_number(l) / to_number(r);
    if (op == "%") return std::fmod(to_number(l), to_number(r));
    if (op == "**") return std::pow(to_number(l), to_number(r));
    if (op == "===") return strict_equals(l, r);
    if (op == "!==") return !strict_equals(l, r);
    if (op == "==") return loose_equals(l, r);
    if (op == "!=") return !loose_equals(l, r);
    if (op == "<" || op == ">" || op == "<=" || op == ">=") {
        if (std::holds_alternative<std::string>(l) && std::holds_alternative<std::string>(r)) {
            int c = std::get<std::string>(l).compare(std::get<std::string>(r));
            if (op == "<") return c < 0;
            if (op == ">") return c > 0;
            if (op == "<=") return c <= 0;
            return c >= 0;
        }
        double a = to_number(l);
        double b = to_number(r);
        if (std::isnan(a) || std::isnan(b)) return false;
        if (op == "<") return a < b;
        if (op == ">") return a > b;
        if (op == "<=") return a <= b;
        return a >= b;
    }
    if (op == "&") return static_cast<double>(to_int32(to_number(l)) & to_int32(to_number(r)));
    if (op == "|") return static_cast<double>(to_int32(to_number(l)) | to_int32(to_number(r)));
    if (op == "^") return static_cast<double>(to_int32(to_number(l)) ^ to_int32(to_number(r)));
    if (op == "<<") return static_cast<double>(static_cast<std::int32_t>(static_cast<std::uint32_t>(to_int32(to_number(l))) << (to_int32(to_number(r)) & 31)));
    if (op == ">>") return static_cast<double>(to_int32(to_number(l)) >> (to_int32(to_number(r)) & 31));
    if (op == ">>>") return static_cast<double>(static_cast<std::uint32_t>(to_int32(to_number(l))) >> (to_int32(to_number(r)) & 31));
    if (op == "instanceof") {
        const auto* ctor = std::get_if<ObjectRef>(&r);
        if (ctor == nullptr || !(*ctor)->callable()) throw_error("TypeError", "Right-hand side of 'instanceof' is not callable");
        const auto* obj = std::get_if<ObjectRef>(&l);
        if (obj == nullptr) return false;
        const std::string& name = (*ctor)->name;
        const Object& o = **obj;
        if (name == "Object") return true;
        if (name == "Array") return o.kind == Object::Kind::array;
        if (name == "Function") return o.callable();
        if (name == "Promise") return o.kind == Object::Kind::promise;
        if (name == "Error") return o.kind == Object::Kind::error;
        if (o.kind == Object::Kind::error && (*ctor)->kind == Object::Kind::native) {
            const Value* n = const_cast<Object&>(o).find("name");
            return n != nullptr && std::holds_alternative<std::string>(*n) && std::get<std::string>(*n) == name;
        }
        if (const Value* tag = const_cast<Object&>(o).find("__ctor__"))
            if (const auto* t = std::get_if<ObjectRef>(tag)) return t->get() == ctor->get();
        return false;
    }
    if (op == "in") {
        const auto* obj = std::get_if<ObjectRef>(&r);
        if (obj == nullptr) throw_error("TypeError", "Cannot use 'in' operator to search for '" + to_string(l) + "' in " + to_string(r));
        std::string key = std::holds_alternative<double>(l) ? number_to_string(std::get<double>(l)) : to_string(l);
        const Object& o = **obj;
        if (o.kind == Object::Kind::array) {
            if (key == "length") return true;
            char* end = nullptr;
            double idx = std::strtod(key.c_str(), &end);
            return end != key.c_str() && *end == '\0' && idx >= 0 && idx < static_cast<double>(o.items.size());
        }
        if (o.kind == Object::Kind::host) return bridge_.member_kind(o.host_path + "." + key) != MemberKind::none;
        return const_cast<Object&>(o).find(key) != nullptr;
    }
    throw_error("SyntaxError", "Unsupported operator " + op);
}

Value Runtime::make_function(const FunctionNode& fn) {
    auto f = new_object(Object::Kind::function);
    f->fn = &fn;
    f->closure = env_;
    f->name = fn.name;
    return f;
}

Value Runtime::call(const Value& fn, const Value& self, std::vector<Value>& args, Pos pos) {
    const auto* o = std::get_if<ObjectRef>(&fn);
    if (o == nullptr || !(*o)->callable()) {
        current_pos_ = pos;
        throw_error("TypeError", to_string(fn) + " is not a function");
    }
    ObjectRef f = *o;
    if (f->kind == Object::Kind::native) {
        if (++depth_ > limits_.max_call_depth) throw LimitAbort{LimitKind::call_depth};
        struct DepthGuard {
            std::size_t& d;
            ~DepthGuard() { --d; }
        } guard{depth_};
        Value result = f->native(*this, self, args);
        return result;
    }
    return call_function(f, self, args, pos);
}

Value Runtime::call_function(const ObjectRef& f, const Value& self, std::vector<Value>& args, Pos pos) {
    if (++depth_ > limits_.max_call_depth) throw LimitAbort{LimitKind::call_depth};
    struct DepthGuard {
        std::size_t& d;
        ~DepthGuard() { --d; }
    } guard{depth_};
    (void)pos;
    const FunctionNode& fn = *f->fn;
    auto env = std::make_shared<Env>(f->closure);
    track(env);
    env->function_scope = true;
    if (!fn.arrow) {
        env->has_this = true;
        env->this_value = self;
        std::vector<Value> copy = args;
        env->vars["arguments"] = Binding{new_array(std::move(copy)), false, true};
    }
    auto body = [&]() -> Value {
        EnvScope scope(env_, env);
        for (std::size_t i = 0; i < fn.params.size(); ++i) {
            const Node& p = *fn.params[i];
            if (p.kind == NodeKind::RestElement) {
                std::vector<Value> rest;
                for (std::size_t k = i; k < args.size(); ++k) rest.push_back(args[k]);
                bind_pattern(*as<RestElement>(p).target, new_array(std::move(rest)), env, DeclKind::Let);
                break;
            }
            bind_pattern(p, i < args.size() ? args[i] : Value{Undefined{}}, env, DeclKind::Let);
        }
        if (fn.expression_body) return eval(*fn.body);
        const auto& block = as<BlockStmt>(*fn.body);
        hoist_var_names(block, env);
        hoist(block.body, env);
        Completion c = exec_block(block.body, env);
        if (c.type == Completion::Type::ret) return c.value;
        return Undefined{};
    };
    if (!fn.is_async) return body();
    try {
        Value v = body();
        if (auto* p = std::get_if<ObjectRef>(&v); p != nullptr && (*p)->kind == Object::Kind::promise) return v;
        return new_promise(Object::PromiseState::fulfilled, std::move(v));
    } catch (JsThrow& t) {
        return new_promise(Object::PromiseState::rejected, std::move(t.value));
    }
}

Value Runtime::construct(const Value& ctor, std::vector<Value>& args, Pos pos) {
    ObjectRef c = std::get<ObjectRef>(ctor);
    if (c->kind == Object::Kind::native) {
        if (!c->constructor) throw_error("TypeError", c->name + " is not a constructor");
        // Native constructors receive `undefined` as this and build their own result.
        return call(ctor, Value{std::string("__new__")}, args, pos);
    }
    if (c->fn->arrow) throw_error("TypeError", c->name + " is not a constructor");
    auto obj = new_object();
    obj->set("__ctor__", c);
    Value r = call_function(c, obj, args, pos);
    if (std::holds_alternative<ObjectRef>(r)) return r;
    obj->erase("__ctor__");
    obj->props.insert(obj->props.begin(), {"__ctor__", c});
    return obj;
}

Value Runtime::await_value(const Value& v, Pos pos) {
    const auto* p = std::get_if<ObjectRef>(&v);
    if (p == nullptr || (*p)->kind != Object::Kind::promise) return v;
    (*p)->handled = true;
    switch ((*p)->promise_state) {
        case Object::PromiseState::fulfilled: return (*p)->settled;
        case Object::PromiseState::rejected: throw JsThrow{(*p)->settled, pos};
        case Object::PromiseState::pending:
            current_pos_ = pos;
            throw_error("Error", "await on a promise that never settles (timers and I/O are unavailable)");
    }
    return Undefined{};
}

Value Runtime::promise_then(const ObjectRef& p, const Value& on_ok, const Value& on_err) {
    p->handled = true;
    auto callable = [](const Value& v) {
        const auto* o = std::get_if<ObjectRef>(&v);
        return o != nullptr && (*o)->callable();
    };
    if (p->promise_state == Object::PromiseState::pending) return new_promise(Object::PromiseState::pending, Undefined{});
    bool ok = p->promise_state == Object::PromiseState::fulfilled;
    const Value& handler = ok ? on_ok : on_err;
    if (!callable(handler)) return new_promise(p->promise_state, p->settled);
    std::vector<Value> args{p->settled};
    try {
        Value r = call(handler, Undefined{}, args, current_pos_);
        if (auto* rp = std::get_if<ObjectRef>(&r); rp != nullptr && (*rp)->kind == Object::Kind::promise) return r;
        return new_promise(Object::PromiseState::fulfilled, std::move(r));
    } catch (JsThrow& t) {
        return new_promise(Object::PromiseState::rejected, std::move(t.value));
    }
}

std::vector<Value> Runtime::iterate(const Value& v, Pos pos) {
    if (const auto* o = std::get_if<ObjectRef>(&v)) {
        if ((*o)->kind == Object::Kind::array) return (*o)->items;
    }
    if (const auto* s = std::get_if<std::string>(&v)) {
        std::vector<Value> out;
        for (std::size_t i = 0; i < s->size();) {
            auto c = static_cast<unsigned char>((*s)[i]);
            std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : 4;
            out.emplace_back(s->substr(i, len));
            i += len;
        }
        return out;
    }
    current_pos_ = pos;
    throw_error("TypeError", to_string(v) + " is not iterable");
}

// ---------------------------------------------------------------------------
// members

Value Runtime::get_member(const Value& obj, const std::string& key, Pos pos, const Node* obj_node) {
    current_pos_ = pos;
    if (is_nullish(obj)) {
        std::string what = obj_node != nullptr ? " (evaluating '" + describe(*obj_node) + "." + key + "')" : "";
        throw_error("TypeError", "Cannot read property '" + key + "' of " + to_string(obj) + what);
    }
    auto bound = [&](const Value& target) -> Value {
        return new_native(key, [target, key, pos, obj_node](Runtime& rt, const Value&, std::vector<Value>& args) {
            return rt.call_method(target, key, args, pos, obj_node);
        });
    };
    if (const auto* s = std::get_if<std::string>(&obj)) {
        if (key == "length") return static_cast<double>(s->size());
        char* end = nullptr;
        long idx = std::strtol(key.c_str(), &end, 10);
        if (!key.empty() && *end == '\0' && idx >= 0) {
            if (static_cast<std::size_t>(idx) < s->size()) return std::string(1, (*s)[static_cast<std::size_t>(idx)]);
            return Undefined{};
        }
        if (is_string_method(key)) return bound(obj);
        return Undefined{};
    }
    if (std::holds_alternative<double>(obj)) {
        if (key == "toFixed" || key == "toString" || key == "toPrecision" || key == "valueOf" || key == "toLocaleString") return bound(obj);
        return Undefined{};
    }
    if (std::holds_alternative<bool>(obj)) {
        if (key == "toString" || key == "valueOf") return bound(obj);
        return Undefined{};
    }
    const ObjectRef& o = std::get<ObjectRef>(obj);
    switch (o->kind) {
        case Object::Kind::array: {
            if (key == "length") return static_cast<double>(o->items.size());
            char* end = nullptr;
            long idx = std::strtol(key.c_str(), &end, 10);
            if (!key.empty() && *end == '\0' && std::isdigit(static_cast<unsigned char>(key[0]))) {
                if (idx >= 0 && static_cast<std::size_t>(idx) < o->items.size()) return o->items[static_cast<std::size_t>(idx)];
                return Undefined{};
            }
            if (is_array_method(key)) return bound(obj);
            if (Value* v = o->find(key)) return *v;
            return Undefined{};
        }
        case Object::Kind::host: return host_get(o, key, pos);
        case Object::Kind::promise:
            if (key == "then" || key == "catch" || key == "finally") return bound(obj);
            return Undefined{};
        case Object::Kind::function:
        case Object::Kind::native:
            if (Value* v = o->find(key)) return *v;
            if (key == "name") return o->name;
            if (key == "call" || key == "apply" || key == "bind") return bound(obj);
            return Undefined{};
        default:
            if (key == "__ctor__") return Undefined{};
            if (Value* v = o->find(key)) return *v;
            if (o->kind == Object::Kind::error && key == "stack") {
                return to_string(obj);
            }
            if (key == "hasOwnProperty" || key == "toString") return bound(obj);
            return Undefined{};
    }
}

void Runtime::set_member(const Value& obj, const std::string& key, Value v, Pos pos, const Node* obj_node) {
    current_pos_ = pos;
    if (is_nullish(obj)) {
        std::string what = obj_node != nullptr ? " (evaluating '" + describe(*obj_node) + "." + key + "')" : "";
        throw_error("TypeError", "Cannot set property '" + key + "' of " + to_string(obj) + what);
    }
    const auto* op = std::get_if<ObjectRef>(&obj);
    if (op == nullptr) return;  // primitives silently ignore property writes
    const ObjectRef& o = *op;
    if (o->kind == Object::Kind::host) {
        host_set(o, key, v, pos);
        return;
    }
    if (o->kind == Object::Kind::array) {
        if (key == "length") {
            double n = to_number(v);
            if (n < 0 || n != std::floor(n)) throw_error("RangeError", "Invalid array length");
            check_array(static_cast<std::size_t>(n));
            o->items.resize(static_cast<std::size_t>(n), Undefined{});
            return;
        }
        char* end = nullptr;
        long idx = std::strtol(key.c_str(), &end, 10);
        if (!key.empty() && *end == '\0' && std::isdigit(static_cast<unsigned char>(key[0])) && idx >= 0) {
            auto i = static_cast<std::size_t>(idx);
            check_array(i + 1);
            if (i >= o->items.size()) o->items.resize(i + 1, Undefined{});
            o->items[i] = std::move(v);
            return;
        }
    }
    o->set(key, std::move(v));
}

Value Runtime::host_get(const ObjectRef& host, const std::string& key, Pos pos) {
    std::string path = host->host_path + "." + key;
    switch (bridge_.member_kind(path)) {
        case MemberKind::none: return Undefined{};
        case MemberKind::object: {
            auto child = new_object(Object::Kind::host);
            child->host_path = path;
            return child;
        }
        case MemberKind::property:
        case MemberKind::writable_property: {
            BridgeRequest req{path, AccessKind::read, {}};
            nlohmann::json result;
            try {
                result = bridge_.call(req);
            } catch (const GuardDenial&) {
                throw;
            } catch (const jitagent::Error& e) {
                current_pos_ = pos;
                throw_error(js_error_name(e.kind()), e.what());
            }
            return from_json(result);
        }
        case MemberKind::method:
            return new_native(key, [path, pos](Runtime& rt, const Value&, std::vector<Value>& args) {
                return rt.host_invoke(path, args, pos);
            });
    }
    return Undefined{};
}

void Runtime::host_set(const ObjectRef& host, const std::string& key, const Value& v, Pos pos) {
    BridgeRequest req{host->host_path + "." + key, AccessKind::write, {to_json(v)}};
    try {
        bridge_.call(req);
    } catch (const GuardDenial&) {
        throw;
    } catch (const jitagent::Error& e) {
        current_pos_ = pos;
        throw_error(js_error_name(e.kind()), e.what());
    }
}

Value Runtime::host_invoke(const std::string& path, std::vector<Value>& args, Pos pos) {
    BridgeRequest req{path, AccessKind::invoke, {}};
    for (const Value& a : args) {
        if (const auto* o = std::get_if<ObjectRef>(&a); o != nullptr && (*o)->callable()) {
            current_pos_ = pos;
            throw_error("TypeError", "functions cannot be passed to " + path);
        }
        req.args.push_back(std::holds_alternative<Undefined>(a) ? nlohmann::json() : to_json(a));
    }
    nlohmann::json result;
    try {
        result = bridge_.call(req);
    } catch (const GuardDenial&) {
        throw;
    } catch (const jitagent::Error& e) {
        current_pos_ = pos;
        throw_error(js_error_name(e.kind()), e.what());
    }
    Value v = from_json(result);
    if (bridge_.returns_promise(path)) return new_promise(Object::PromiseState::fulfilled, std::move(v));
    return v;
}

Value Runtime::call_method(const Value& obj, const std::string& key, std::vector<Value>& args, Pos pos, const Node* obj_node) {
    current_pos_ = pos;
    Value out;
    if (const auto* s = std::get_if<std::string>(&obj)) {
        if (string_method(*s, key, args, out)) return out;
    } else if (const auto* d = std::get_if<double>(&obj)) {
        if (number_method(*d, key, args, out)) return out;
    } else if (const auto* b = std::get_if<bool>(&obj)) {
        if (key == "toString") return std::string(*b ? "true" : "false");
        if (key == "valueOf") return *b;
    } else if (const auto* o = std::get_if<ObjectRef>(&obj)) {
        const ObjectRef& ref = *o;
        if (ref->kind == Object::Kind::array) {
            if (array_method(ref, key, args, out)) return out;
        } else if (ref->kind == Object::Kind::host) {
            std::string path = ref->host_path + "." + key;
            if (bridge_.member_kind(path) == MemberKind::method) return host_invoke(path, args, pos);
        } else if (ref->kind == Object::Kind::promise) {
            Value none = Undefined{};
            if (key == "then") return promise_then(ref, args.empty() ? none : args[0], args.size() > 1 ? args[1] : none);
            if (key == "catch") return promise_then(ref, none, args.empty() ? none : args[0]);
            if (key == "finally") {
                ref->handled = true;
                if (!args.empty()) {
                    std::vector<Value> no_args;
                    call(args[0], Undefined{}, no_args, pos);
                }
                return ref;
            }
        } else if (ref->callable() && ref->find(key) == nullptr) {
            if (key == "call") {
                Value self = args.empty() ? Value{Undefined{}} : args[0];
                std::vector<Value> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
                return call(obj, self, rest, pos);
            }
            if (key == "apply") {
                Value self = args.empty() ? Value{Undefined{}} : args[0];
                std::vector<Value> rest = args.size() > 1 && !is_nullish(args[1]) ? iterate(args[1], pos) : std::vector<Value>{};
                return call(obj, self, rest, pos);
            }
            if (key == "bind") {
                Value self = args.empty() ? Value{Undefined{}} : args[0];
                std::vector<Value> bound_args(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
                Value target = obj;
                return new_native(ref->name, [target, self, bound_args](Runtime& rt, const Value&, std::vector<Value>& more) {
                    std::vector<Value> all = bound_args;
                    all.insert(all.end(), more.begin(), more.end());
                    return rt.call(target, self, all);
                });
            }
        } else if (ref->find(key) == nullptr) {
            if (object_method(ref, key, args, out)) return out;
        }
    }
    Value fn = get_member(obj, key, pos, obj_node);
    const auto* f = std::get_if<ObjectRef>(&fn);
    if (f == nullptr || !(*f)->callable()) {
        current_pos_ = pos;
        std::string base = obj_node != nullptr ? describe(*obj_node) : type_of(obj);
        throw_error("TypeError", base + "." + key + " is not a function");
    }
    return call(fn, obj, args, pos);
}

}  // namespace detail
}  // namespace jitagent::script
