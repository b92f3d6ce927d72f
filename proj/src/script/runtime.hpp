#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "jitagent/script/ast.hpp"
#include "jitagent/script/interpreter.hpp"

namespace jitagent::script::detail {

struct Undefined {
    friend bool operator==(Undefined, Undefined) { return true; }
};
struct Null {
    friend bool operator==(Null, Null) { return true; }
};

struct Object;
struct Env;
using ObjectRef = std::shared_ptr<Object>;
using EnvRef = std::shared_ptr<Env>;
using Value = std::variant<Undefined, Null, bool, double, std::string, ObjectRef>;

class Runtime;
using NativeFn = std::function<Value(Runtime&, const Value& self, std::vector<Value>& args)>;

struct Object {
    enum class Kind { plain, array, function, native, host, promise, error };
    enum class PromiseState { pending, fulfilled, rejected };

    explicit Object(Kind k) : kind(k) {}

    Kind kind;
    std::vector<std::pair<std::string, Value>> props;
    std::vector<Value> items;

    // function
    const FunctionNode* fn = nullptr;
    EnvRef closure;
    Value lexical_this;  // arrows
    // native
    NativeFn native;
    std::string name;
    bool constructor = false;
    // host
    std::string host_path;
    // promise
    PromiseState promise_state = PromiseState::pending;
    Value settled;
    bool handled = false;

    Value* find(std::string_view key) {
        for (auto& [k, v] : props)
            if (k == key) return &v;
        return nullptr;
    }
    void set(const std::string& key, Value v) {
        if (Value* slot = find(key)) {
            *slot = std::move(v);
            return;
        }
        props.emplace_back(key, std::move(v));
    }
    bool erase(std::string_view key) {
        for (auto it = props.begin(); it != props.end(); ++it) {
            if (it->first == key) {
                props.erase(it);
                return true;
            }
        }
        return false;
    }
    bool callable() const { return kind == Kind::function || kind == Kind::native; }
};

struct Binding {
    Value value;
    bool is_const = false;
    bool initialized = true;
};

struct Env {
    explicit Env(EnvRef p) : parent(std::move(p)) {}
    EnvRef parent;
    std::unordered_map<std::string, Binding> vars;
    bool function_scope = false;
    bool has_this = false;
    Value this_value;
};

// Control transfer for `throw` inside scripts. Catchable by try/catch.
struct JsThrow {
    Value value;
    Pos pos;
};

// Uncatchable aborts.
struct LimitAbort {
    LimitKind kind;
};

struct Completion {
    enum class Type { normal, brk, cont, ret };
    Type type = Type::normal;
    Value value;
};

class Runtime {
public:
    Runtime(Bridge& bridge, const Limits& limits);
    ~Runtime();

    Outcome run(const Program& program);

    // ---- used by builtins ----
    ObjectRef new_object(Object::Kind kind = Object::Kind::plain);
    ObjectRef new_array(std::vector<Value> items = {});
    ObjectRef new_native(std::string name, NativeFn fn, bool constructor = false);
    ObjectRef new_promise(Object::PromiseState state, Value v);
    ObjectRef make_error(const std::string& name, const std::string& message);
    [[noreturn]] void throw_error(const std::string& name, const std::string& message);

    Value call(const Value& fn, const Value& self, std::vector<Value>& args, Pos pos = {});
    Value construct(const Value& ctor, std::vector<Value>& args, Pos pos = {});

    std::string to_string(const Value& v);
    double to_number(const Value& v);
    static bool truthy(const Value& v);
    std::string type_of(const Value& v) const;
    bool strict_equals(const Value& a, const Value& b) const;
    bool loose_equals(const Value& a, const Value& b);
    std::string inspect(const Value& v, int depth = 0, bool top = true);
    std::string json_stringify(const Value& v, const std::string& indent, const std::string& current, bool& present);
    Value json_parse(const std::string& text);

    nlohmann::json to_json(const Value& v, int depth = 0);
    Value from_json(const nlohmann::json& j);

    Value get_member(const Value& obj, const std::string& key, Pos pos, const Node* obj_node);
    void set_member(const Value& obj, const std::string& key, Value v, Pos pos, const Node* obj_node);
    Value call_method(const Value& obj, const std::string& key, std::vector<Value>& args, Pos pos, const Node* obj_node);

    void check_string(const std::string& s);
    void check_array(std::size_t n);
    void tick();
    void emit_console(const std::string& line);

    Value promise_then(const ObjectRef& p, const Value& on_ok, const Value& on_err);
    Value await_value(const Value& v, Pos pos);

    std::vector<Value> iterate(const Value& v, Pos pos);

    Bridge& bridge() { return bridge_; }

private:
    friend struct Builtins;

    // evaluation
    Value eval(const Node& n);
    Completion exec(const Node& n, const EnvRef& env);
    Completion exec_block(const std::vector<NodePtr>& body, const EnvRef& env);
    Completion exec_statement(const Node& n);
    void hoist(const std::vector<NodePtr>& body, const EnvRef& env);
    void hoist_var_names(const Node& n, const EnvRef& env);
    void bind_pattern(const Node& pattern, Value v, const EnvRef& env, std::optional<DeclKind> decl);
    void declare(const EnvRef& env, const std::string& name, Value v, DeclKind kind);
    void assign_identifier(const std::string& name, Value v, Pos pos);
    Binding* lookup(const std::string& name);
    Value read_identifier(const Identifier& id);

    struct ChainResult {
        Value value;
        Value self;
        bool short_circuit = false;
    };
    ChainResult eval_chain(const Node& n);
    Value eval_call(const CallExpr& c);
    Value eval_assign(const AssignExpr& a);
    Value eval_update(const UpdateExpr& u);
    Value eval_binary(const std::string& op, const Value& l, const Value& r, Pos pos);
    Value eval_unary(const UnaryExpr& u);
    Value make_function(const FunctionNode& fn);
    Value call_function(const ObjectRef& fn, const Value& self, std::vector<Value>& args, Pos pos);
    std::vector<Value> eval_args(const std::vector<NodePtr>& args);
    std::string member_key(const MemberExpr& m);
    std::string describe(const Node& n) const;

    // builtin dispatch
    bool string_method(const std::string& s, const std::string& key, std::vector<Value>& args, Value& out);
    bool array_method(const ObjectRef& a, const std::string& key, std::vector<Value>& args, Value& out);
    bool number_method(double d, const std::string& key, std::vector<Value>& args, Value& out);
    bool object_method(const ObjectRef& o, const std::string& key, std::vector<Value>& args, Value& out);
    bool is_string_method(const std::string& key) const;
    bool is_array_method(const std::string& key) const;
    Value host_get(const ObjectRef& host, const std::string& key, Pos pos);
    void host_set(const ObjectRef& host, const std::string& key, const Value& v, Pos pos);
    Value host_invoke(const std::string& path, std::vector<Value>& args, Pos pos);
    void install_globals();

    void track(const ObjectRef& o);
    void track(const EnvRef& e);
    void release_all();

    Bridge& bridge_;
    Limits limits_;
    EnvRef global_;
    EnvRef env_;
    std::uint64_t steps_ = 0;
    std::size_t output_bytes_ = 0;
    std::size_t depth_ = 0;
    std::chrono::steady_clock::time_point deadline_;
    std::vector<std::string> console_;
    std::vector<std::weak_ptr<Object>> objects_;
    std::vector<std::weak_ptr<Env>> envs_;
    std::size_t compact_at_ = 4096;
    std::vector<ObjectRef> rejected_;
    Pos current_pos_;
};

}  // namespace jitagent::script::detail
