#include "jitagent/agent/session.hpp"

#include "jitagent/common.hpp"

namespace jitagent::agent {

using nlohmann::json;

std::string_view to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::running: return "running";
        case SessionStatus::awaiting_approval: return "awaiting_approval";
        case SessionStatus::awaiting_user: return "awaiting_user";
        case SessionStatus::succeeded: return "succeeded";
        case SessionStatus::failed: return "failed";
        case SessionStatus::rolled_back: return "rolled_back";
    }
    return "running";
}

SessionStatus session_status_from_string(std::string_view s) {
    for (SessionStatus v : {SessionStatus::running, SessionStatus::awaiting_approval, SessionStatus::awaiting_user,
                            SessionStatus::succeeded, SessionStatus::failed, SessionStatus::rolled_back})
        if (to_string(v) == s) return v;
    throw ParseError("unknown session status '" + std::string(s) + "'");
}

bool is_terminal(SessionStatus s) {
    return s == SessionStatus::succeeded || s == SessionStatus::failed || s == SessionStatus::rolled_back;
}

std::string IterationRecord::problem() const {
    if (!feedback.empty()) return "User: " + feedback.back();
    if (verification && !verification->passed) return "Verification failed: " + verification->detail;
    if (result && result->error) return result->error->display();
    if (approval && !*approval) return "Operator declined to approve the script";
    if (verdict && verdict->decision == safety::Decision::Deny) {
        std::string out = "Denied by safety rules:";
        for (const auto& r : verdict->reasons) out += " " + r.reason + ";";
        return out;
    }
    if (parse_error) return "ParseError: " + *parse_error;
    return "";
}

json to_json(const IterationRecord& r) {
    json j;
    j["index"] = r.index;
    j["prompt_digest"] = r.prompt_digest;
    j["raw_response"] = r.raw_response;
    j["response"] = r.response ? json(r.response->to_json()) : json(nullptr);
    j["parse_error"] = r.parse_error ? json(*r.parse_error) : json(nullptr);
    j["verdict"] = r.verdict ? safety::to_json(*r.verdict) : json(nullptr);
    j["result"] = r.result ? sandbox::to_json(*r.result) : json(nullptr);
    if (r.verification)
        j["verification"] = {{"code_hash", r.verification->code_hash}, {"passed", r.verification->passed}, {"detail", r.verification->detail}};
    else
        j["verification"] = nullptr;
    j["approval"] = r.approval ? json(*r.approval) : json(nullptr);
    j["feedback"] = r.feedback;
    j["snapshot_id"] = r.snapshot_id;
    return j;
}

json to_json(const Session& s) {
    json its = json::array();
    for (const auto& r : s.iterations) its.push_back(to_json(r));
    return {{"id", s.id},
            {"instruction", s.instruction},
            {"fixture", s.fixture ? json(*s.fixture) : json(nullptr)},
            {"status", to_string(s.status)},
            {"outcome", s.outcome},
            {"max_iterations", s.max_iterations},
            {"pre_session_snapshot", s.pre_session_snapshot},
            {"llm_calls", s.llm_calls},
            {"created_at", s.created_at},
            {"state_hash", host::state_hash(s.state)},
            {"iterations", its}};
}

}  // namespace jitagent::agent
