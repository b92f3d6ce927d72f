#pragma once

// Embedded interpreter for action code. Each `Interpreter::run` starts from
// fresh globals: the pure built-ins, `console`, and the host root object
// supplied through `Bridge`. Nothing else is reachable.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/script/ast.hpp"

namespace jitagent::script {

enum class MemberKind { none, object, property, writable_property, method };

enum class AccessKind { read, write, invoke };

struct BridgeRequest {
    std::string path;
    AccessKind kind = AccessKind::read;
    std::vector<nlohmann::json> args;
};

// Thrown by a Bridge implementation when a safety guard refuses a call. It
// aborts the script; action code cannot catch it.
class GuardDenial : public std::exception {
public:
    explicit GuardDenial(std::string reason) : reason_(std::move(reason)) {}
    const char* what() const noexcept override { return reason_.c_str(); }

private:
    std::string reason_;
};

// Host side of the embedding. Paths are dotted from the root, e.g.
// "app.player.volume". Bridge results that are JSON objects may carry a
// "$methods" member: {"click": {"path": "app.ui.click", "args": [...]}} turns
// into callable methods bound to those bridge calls.
class Bridge {
public:
    virtual ~Bridge() = default;
    virtual std::string root_name() const = 0;
    virtual MemberKind member_kind(std::string_view path) const = 0;
    virtual std::vector<std::string> members(std::string_view object_path) const = 0;
    // Methods whose result is surfaced as an already-settled promise.
    virtual bool returns_promise(std::string_view path) const {
        (void)path;
        return false;
    }
    // May throw jitagent::Error subclasses (surfaced to the script as catchable
    // errors) or GuardDenial (aborts the script).
    virtual nlohmann::json call(const BridgeRequest& request) = 0;
};

struct Limits {
    std::uint64_t step_budget = 5'000'000;
    std::size_t output_budget = 64 * 1024;
    std::chrono::milliseconds wall_timeout{2000};
    // Set from another thread to interrupt the running script.
    const std::atomic<bool>* cancel = nullptr;
    std::size_t max_call_depth = 200;
    std::size_t max_live_objects = 1'000'000;
    std::size_t max_string_length = 8u << 20;
    std::size_t max_array_length = 1u << 22;
};

enum class LimitKind { steps, timeout, output, memory, call_depth };

std::string_view to_string(LimitKind kind);

struct Outcome {
    enum class Kind { ok, thrown, syntax_error, guard_denied, limit_exceeded };

    Kind kind = Kind::ok;
    // Completion value of the last top-level expression statement.
    std::optional<nlohmann::json> completion;
    std::vector<std::string> console;
    // Constructor name when an Error object escaped ("TypeError", "Error", ...);
    // empty when a non-error value was thrown.
    std::string error_name;
    std::string error_message;
    LimitKind limit = LimitKind::steps;
    Pos pos;
    std::uint64_t steps = 0;
};

class Interpreter {
public:
    Interpreter(Bridge& bridge, Limits limits);
    ~Interpreter();
    Interpreter(const Interpreter&) = delete;
    Interpreter& operator=(const Interpreter&) = delete;

    Outcome run(std::string_view source);
    Outcome run(const Program& program);

private:
    Bridge& bridge_;
    Limits limits_;
};

// JavaScript Number::toString for finite and non-finite doubles.
std::string number_to_string(double v);

}  // namespace jitagent::script
