#include "jitagent/sandbox/sandbox.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <stop_token>
#include <thread>

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"

namespace jitagent::sandbox {

using nlohmann::json;

std::string ActionCode::hash() const { return sha256_hex(serialize()); }

ActionCode ActionCode::parse(std::string_view tagged) {
    auto colon = tagged.find(':');
    if (colon == std::string_view::npos || colon == 0) throw ParseError("action code has no language tag");
    return {std::string(tagged.substr(0, colon)), std::string(tagged.substr(colon + 1))};
}

void ResourceLimits::validate() const {
    if (wall_timeout.count() <= 0) throw DomainError("wall_timeout must be positive");
    if (step_budget == 0) throw DomainError("step_budget must be positive");
    if (output_budget == 0) throw DomainError("output_budget must be positive");
}

std::string_view to_string(Status s) {
    switch (s) {
        case Status::ok: return "ok";
        case Status::runtime_error: return "runtime_error";
        case Status::denied: return "denied";
        case Status::timeout: return "timeout";
        case Status::resource_exhausted: return "resource_exhausted";
    }
    return "ok";
}

Status status_from_string(std::string_view s) {
    for (Status v : {Status::ok, Status::runtime_error, Status::denied, Status::timeout, Status::resource_exhausted})
        if (to_string(v) == s) return v;
    throw ParseError("unknown execution status '" + std::string(s) + "'");
}

std::string_view to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::type_error: return "TypeError-like";
        case ErrorKind::reference_error: return "ReferenceError-like";
        case ErrorKind::thrown_value: return "ThrownValue";
        case ErrorKind::syntax_error: return "SyntaxError-like";
        case ErrorKind::guard_denied: return "GuardDenied";
        case ErrorKind::limit_exceeded: return "LimitExceeded";
    }
    return "ThrownValue";
}

ErrorKind error_kind_from_string(std::string_view s) {
    for (ErrorKind k : {ErrorKind::type_error, ErrorKind::reference_error, ErrorKind::thrown_value, ErrorKind::syntax_error,
                        ErrorKind::guard_denied, ErrorKind::limit_exceeded})
        if (to_string(k) == s) return k;
    throw ParseError("unknown error kind '" + std::string(s) + "'");
}

json to_json(const ExecutionResult& r) {
    json j;
    j["status"] = std::string(to_string(r.status));
    j["return_value"] = r.return_value ? *r.return_value : json(nullptr);
    j["console"] = r.console;
    if (r.error)
        j["error"] = {{"kind", std::string(to_string(r.error->kind))}, {"message", r.error->message}, {"name", r.error->name}};
    else
        j["error"] = nullptr;
    j["state_diff"] = host::to_json(r.state_diff);
    j["duration_ms"] = r.duration_ms;
    return j;
}

ExecutionResult execution_result_from_json(const json& j) {
    ExecutionResult r;
    try {
        r.status = status_from_string(j.at("status").get<std::string>());
        if (j.contains("return_value") && !j.at("return_value").is_null()) r.return_value = j.at("return_value");
        r.console = j.at("console").get<std::vector<std::string>>();
        if (j.contains("error") && !j.at("error").is_null()) {
            const json& e = j.at("error");
            r.error = ErrorReport{error_kind_from_string(e.at("kind").get<std::string>()), e.at("message").get<std::string>(),
                                  e.value("name", "")};
        }
        if (j.contains("state_diff")) r.state_diff = host::diff_from_json(j.at("state_diff"));
        r.duration_ms = j.value("duration_ms", 0.0);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed execution result: ") + e.what());
    }
    return r;
}

std::optional<ErrorReport> normalize_error(const script::Outcome& o) {
    using K = script::Outcome::Kind;
    switch (o.kind) {
        case K::ok: return std::nullopt;
        case K::syntax_error: {
            std::string where = std::to_string(o.pos.line) + ":" + std::to_string(o.pos.column);
            return ErrorReport{ErrorKind::syntax_error, o.error_message + " (at " + where + ")", "SyntaxError"};
        }
        case K::guard_denied: return ErrorReport{ErrorKind::guard_denied, o.error_message, ""};
        case K::limit_exceeded: return ErrorReport{ErrorKind::limit_exceeded, o.error_message, ""};
        case K::thrown: {
            ErrorKind kind = ErrorKind::thrown_value;
            if (o.error_name == "TypeError") kind = ErrorKind::type_error;
            else if (o.error_name == "ReferenceError") kind = ErrorKind::reference_error;
            else if (o.error_name == "SyntaxError") kind = ErrorKind::syntax_error;
            return ErrorReport{kind, o.error_message, o.error_name};
        }
    }
    return std::nullopt;
}

namespace {

// Raises the cancel flag if the script is still running after `timeout`.
class Watchdog {
public:
    Watchdog(std::atomic<bool>& cancel, std::chrono::milliseconds timeout)
        : thread_([this, &cancel, timeout](std::stop_token stop) {
              std::unique_lock lock(mutex_);
              if (!cv_.wait_for(lock, stop, timeout, [] { return false; })) {
                  if (!stop.stop_requested()) cancel.store(true);
              }
          }) {}

    ~Watchdog() {
        thread_.request_stop();
        thread_.join();
    }

    Watchdog(const Watchdog&) = delete;
    Watchdog& operator=(const Watchdog&) = delete;

private:
    std::mutex mutex_;
    std::condition_variable_any cv_;
    std::jthread thread_;
};

Status status_for(const script::Outcome& o) {
    using K = script::Outcome::Kind;
    switch (o.kind) {
        case K::ok: return Status::ok;
        case K::thrown:
        case K::syntax_error: return Status::runtime_error;
        case K::guard_denied: return Status::denied;
        case K::limit_exceeded: return o.limit == script::LimitKind::timeout ? Status::timeout : Status::resource_exhausted;
    }
    return Status::runtime_error;
}

}  // namespace

std::pair<host::HostState, ExecutionResult> execute(const ActionCode& code, const host::HostState& state,
                                                    const ResourceLimits& limits, const Guard& guard) {
    if (code.language_tag != "js") throw UnsupportedLanguage("unsupported action code language '" + code.language_tag + "'");
    limits.validate();

    auto started = std::chrono::steady_clock::now();
    host::HostState working = state;
    host::HostBridge bridge(working, [&guard](const script::BridgeRequest& r) {
        if (!guard) return;
        if (auto reason = guard(r)) throw script::GuardDenial(*reason);
    });

    std::atomic<bool> cancel{false};
    script::Limits lim;
    lim.step_budget = limits.step_budget;
    lim.output_budget = limits.output_budget;
    lim.wall_timeout = limits.wall_timeout;
    lim.cancel = &cancel;

    script::Outcome outcome;
    {
        Watchdog watchdog(cancel, limits.wall_timeout);
        script::Interpreter interp(bridge, lim);
        outcome = interp.run(code.source);
    }

    ExecutionResult result;
    result.status = status_for(outcome);
    result.console = std::move(outcome.console);
    result.error = normalize_error(outcome);
    if (result.ok()) result.return_value = outcome.completion;
    result.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

    if (!result.ok()) return {state, std::move(result)};
    result.state_diff = host::diff(state, working);
    return {std::move(working), std::move(result)};
}

}  // namespace jitagent::sandbox
