#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/agent/response.hpp"
#include "jitagent/host/state.hpp"
#include "jitagent/safety/safety.hpp"
#include "jitagent/sandbox/sandbox.hpp"

namespace jitagent::agent {

enum class SessionStatus { running, awaiting_approval, awaiting_user, succeeded, failed, rolled_back };
std::string_view to_string(SessionStatus s);
SessionStatus session_status_from_string(std::string_view s);
bool is_terminal(SessionStatus s);

struct Verification {
    std::string code_hash;  // empty when an oracle predicate decided
    bool passed = false;
    std::string detail;

    bool operator==(const Verification&) const = default;
};

struct IterationRecord {
    int index = 1;
    std::string prompt_digest;
    std::string raw_response;
    std::optional<AgentResponse> response;  // absent when the reply did not parse
    std::optional<std::string> parse_error;
    std::optional<safety::Verdict> verdict;
    std::optional<sandbox::ExecutionResult> result;
    std::optional<Verification> verification;
    std::optional<bool> approval;  // operator decision on a NeedsApproval verdict
    std::vector<std::string> feedback;  // user messages received after this round
    std::int64_t snapshot_id = 0;   // pre-execution snapshot, 0 when nothing ran

    // One-line account of what went wrong in this round, empty if nothing did.
    std::string problem() const;
};

nlohmann::json to_json(const IterationRecord& r);

struct Session {
    std::string id;
    std::string instruction;
    std::optional<std::string> fixture;
    host::HostState state;
    std::vector<IterationRecord> iterations;
    SessionStatus status = SessionStatus::running;
    int max_iterations = 5;
    std::int64_t pre_session_snapshot = 0;
    std::string outcome;  // reason for the terminal status
    int llm_calls = 0;
    std::int64_t created_at = 0;

    // Observer for live events: kind is one of iteration_started,
    // response_parsed, verdict, execution_result, status_changed.
    std::function<void(const std::string& kind, const nlohmann::json& payload)> on_event;
};

// Full record without the host state; `state_hash` identifies it.
nlohmann::json to_json(const Session& s);

}  // namespace jitagent::agent
