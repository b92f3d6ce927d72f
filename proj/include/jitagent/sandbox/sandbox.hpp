#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/host/state.hpp"
#include "jitagent/script/interpreter.hpp"

namespace jitagent::sandbox {

struct ActionCode {
    std::string language_tag = "js";
    std::string source;

    // "<tag>:<source>", the form used in agent responses.
    std::string serialize() const { return language_tag + ":" + source; }
    std::string hash() const;
    // Splits on the first ':'. Throws ParseError when there is no tag.
    static ActionCode parse(std::string_view tagged);
    static ActionCode js(std::string source) { return {"js", std::move(source)}; }

    bool operator==(const ActionCode&) const = default;
};

struct ResourceLimits {
    std::chrono::milliseconds wall_timeout{2000};
    std::uint64_t step_budget = 5'000'000;
    std::size_t output_budget = 64 * 1024;

    // Throws DomainError unless every limit is strictly positive.
    void validate() const;
};

enum class Status { ok, runtime_error, denied, timeout, resource_exhausted };
std::string_view to_string(Status s);
Status status_from_string(std::string_view s);

enum class ErrorKind { type_error, reference_error, thrown_value, syntax_error, guard_denied, limit_exceeded };
// "TypeError-like", "ReferenceError-like", "ThrownValue", "SyntaxError-like",
// "GuardDenied", "LimitExceeded".
std::string_view to_string(ErrorKind k);
ErrorKind error_kind_from_string(std::string_view s);

struct ErrorReport {
    ErrorKind kind = ErrorKind::thrown_value;
    std::string message;
    // Interpreter-side constructor name ("TypeError", "Error"); empty for
    // thrown non-error values and for non-script failures.
    std::string name;

    // "TypeError: msg", or just the message when there is no name.
    std::string display() const { return name.empty() ? message : name + ": " + message; }
    bool operator==(const ErrorReport&) const = default;
};

struct ExecutionResult {
    Status status = Status::ok;
    std::optional<nlohmann::json> return_value;
    std::vector<std::string> console;
    std::optional<ErrorReport> error;
    host::StateDiff state_diff;
    double duration_ms = 0;

    bool ok() const { return status == Status::ok; }
};

nlohmann::json to_json(const ExecutionResult& r);
ExecutionResult execution_result_from_json(const nlohmann::json& j);

// Returns a denial reason to block the call, or nothing to let it through.
using Guard = std::function<std::optional<std::string>(const script::BridgeRequest&)>;

// Maps an interpreter outcome that did not finish normally onto the closed
// set of error kinds. Returns nothing for Outcome::Kind::ok.
std::optional<ErrorReport> normalize_error(const script::Outcome& outcome);

// Runs `code` against a working copy of `state`. The copy is committed only
// when the script finishes normally; otherwise the returned state is `state`.
// Throws UnsupportedLanguage for tags other than "js"; every script-level
// failure is reported in the result.
std::pair<host::HostState, ExecutionResult> execute(const ActionCode& code, const host::HostState& state,
                                                    const ResourceLimits& limits, const Guard& guard = {});

}  // namespace jitagent::sandbox
