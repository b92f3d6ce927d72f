#include "jitagent/agent/agent.hpp"

#include "jitagent/common.hpp"
#include "jitagent/context/index.hpp"
#include "jitagent/script/parser.hpp"

namespace jitagent::agent {

using nlohmann::json;

namespace {

bool has_line(const std::vector<std::string>& console, std::string_view token) {
    for (const std::string& line : console) {
        auto b = line.find_first_not_of(" \t");
        auto e = line.find_last_not_of(" \t\r");
        if (b != std::string::npos && line.substr(b, e - b + 1) == token) return true;
    }
    return false;
}

safety::Verdict analyze_or_allow(const sandbox::ActionCode& code, const safety::RuleSet& rules) {
    try {
        return safety::analyze(code, rules);
    } catch (const script::ScriptSyntaxError&) {
        // Nothing of a script that does not parse can run; the sandbox
        // reports the syntax error as the round's result.
        return safety::Verdict{safety::Decision::Allow, {}};
    }
}

}  // namespace

Agent::Agent(AgentConfig config, std::shared_ptr<llm::Provider> provider, statekeeper::Store& store, safety::RuleSet rules)
    : config_(std::move(config)), provider_(std::move(provider)), store_(store), rules_(std::move(rules)) {
    if (config_.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (config_.max_llm_calls < 1) throw ConfigError("max_llm_calls must be at least 1");
    if (!provider_) throw ConfigError("agent needs a provider");
    if (config_.verification == VerificationMode::oracle && !config_.oracle)
        throw ConfigError("oracle verification needs an oracle");
    config_.limits.validate();
}

Session Agent::start(std::string id, std::string instruction, host::HostState initial, std::optional<std::string> fixture) const {
    if (instruction.find_first_not_of(" \t\r\n") == std::string::npos) throw DomainError("instruction must not be empty");
    host::validate(initial);
    Session s;
    s.id = std::move(id);
    s.instruction = std::move(instruction);
    s.fixture = std::move(fixture);
    s.state = std::move(initial);
    s.max_iterations = config_.max_iterations;
    s.created_at = wall_clock_ms();
    s.pre_session_snapshot = store_.take_snapshot(s.state, s.id, 0);
    return s;
}

void Agent::emit(Session& session, const std::string& kind, const json& payload) const {
    if (session.on_event) session.on_event(kind, payload);
}

void Agent::set_status(Session& session, SessionStatus status, std::string outcome) const {
    if (is_terminal(session.status)) throw WrongState("session " + session.id + " is already " + std::string(to_string(session.status)));
    session.status = status;
    session.outcome = std::move(outcome);
    emit(session, "status_changed", {{"status", to_string(status)}, {"outcome", session.outcome}});
}

void Agent::fail(Session& session, std::string outcome) const {
    if (config_.rollback_on_failure && session.pre_session_snapshot > 0)
        session.state = store_.rollback(session.pre_session_snapshot, session.id, &session.state);
    set_status(session, SessionStatus::failed, std::move(outcome));
}

void Agent::check_budget(Session& session) const {
    if (session.status == SessionStatus::running && static_cast<int>(session.iterations.size()) >= session.max_iterations)
        fail(session, "iteration limit of " + std::to_string(session.max_iterations) + " reached");
}

std::string Agent::complete(Session& session, llm::Provider& provider, const std::string& prompt, const std::string& purpose) const {
    if (session.llm_calls >= config_.max_llm_calls)
        throw BudgetExceeded("session " + session.id + " used its " + std::to_string(config_.max_llm_calls) + " model calls");
    ++session.llm_calls;
    llm::ChatRequest req;
    req.messages = {{"user", prompt}};
    req.model_name = config_.model_name;
    req.temperature = config_.temperature;
    req.context.purpose = purpose;
    req.context.instruction = session.instruction;
    if (purpose == "action") {
        req.context.iteration = static_cast<int>(session.iterations.size()) + 1;
        if (!session.iterations.empty()) req.context.last_error = session.iterations.back().problem();
    } else {
        req.context.iteration = static_cast<int>(session.iterations.size());
    }
    return provider.complete(req);
}

const IterationRecord& Agent::step(Session& session) const {
    if (session.status != SessionStatus::running)
        throw WrongState("session " + session.id + " is " + std::string(to_string(session.status)) + ", not running");
    if (static_cast<int>(session.iterations.size()) >= session.max_iterations)
        throw WrongState("session " + session.id + " has no rounds left");

    IterationRecord rec;
    rec.index = static_cast<int>(session.iterations.size()) + 1;
    emit(session, "iteration_started", {{"index", rec.index}});
    auto snippets = context::surface_index().retrieve(session.instruction, config_.context_k);
    std::string prompt = build_prompt(session, snippets, config_.prompt);
    rec.prompt_digest = sha256_hex(prompt);
    rec.raw_response = complete(session, *provider_, prompt, "action");
    try {
        rec.response = parse_response(rec.raw_response);
    } catch (const ParseError& e) {
        rec.parse_error = e.what();
    }
    emit(session, "response_parsed",
         {{"index", rec.index}, {"response", rec.response ? json(rec.response->to_json()) : json(nullptr)},
          {"parse_error", rec.parse_error ? json(*rec.parse_error) : json(nullptr)}});
    session.iterations.push_back(std::move(rec));
    const std::size_t at = session.iterations.size() - 1;
    IterationRecord& r = session.iterations[at];

    if (r.parse_error) {
        check_budget(session);
        return session.iterations[at];
    }
    if (!r.response->has_code()) {
        fail(session, "not possible: " + r.response->not_possible().reasons);
        return session.iterations[at];
    }

    r.verdict = analyze_or_allow(r.response->code(), rules_);
    emit(session, "verdict", {{"index", r.index}, {"verdict", safety::to_json(*r.verdict)}});
    switch (r.verdict->decision) {
        case safety::Decision::Deny: {
            statekeeper::AuditEntry e;
            e.session_id = session.id;
            e.iteration_index = r.index;
            e.code_hash = r.response->code().hash();
            e.verdict_decision = "Deny";
            e.result_status = "not_executed";
            e.snapshot_id = session.pre_session_snapshot;
            e.tag = "agent";
            store_.append_audit(std::move(e));
            check_budget(session);
            break;
        }
        case safety::Decision::NeedsApproval:
            if (config_.auto_approve) {
                r.approval = true;
                execute_round(session, r, true);
            } else {
                set_status(session, SessionStatus::awaiting_approval, "waiting for approval");
            }
            break;
        case safety::Decision::Allow: execute_round(session, r, false); break;
    }
    return session.iterations[at];
}

void Agent::execute_round(Session& session, IterationRecord& rec, bool approved) const {
    const sandbox::ActionCode& code = rec.response->code();
    rec.snapshot_id = store_.take_snapshot(session.state, session.id, rec.index);
    auto [after, result] = sandbox::execute(code, session.state, config_.limits, safety::make_guard(rules_, approved));
    session.state = std::move(after);
    rec.result = std::move(result);

    statekeeper::AuditEntry e;
    e.session_id = session.id;
    e.iteration_index = rec.index;
    e.code_hash = code.hash();
    e.verdict_decision = std::string(safety::to_string(rec.verdict->decision)) + (approved ? ":approved" : "");
    e.result_status = std::string(sandbox::to_string(rec.result->status));
    e.snapshot_id = rec.snapshot_id;
    e.state_diff = rec.result->state_diff;
    e.tag = "agent";
    store_.append_audit(std::move(e));
    emit(session, "execution_result", {{"index", rec.index}, {"result", sandbox::to_json(*rec.result)}});
    after_execution(session, rec);
}

void Agent::after_execution(Session& session, IterationRecord& rec) const {
    // A failed script never ends the loop, whatever final_step claimed.
    if (!rec.result->ok() || !rec.response->final_step) {
        check_budget(session);
        return;
    }
    const int index = rec.index;
    Verification v = verify(session);
    IterationRecord& r = session.iterations[static_cast<std::size_t>(index - 1)];
    r.verification = v;
    emit(session, "execution_result", {{"index", index}, {"verification", {{"passed", v.passed}, {"detail", v.detail}, {"code_hash", v.code_hash}}}});
    if (v.passed) set_status(session, SessionStatus::succeeded, "task accomplished");
    else set_status(session, SessionStatus::awaiting_user, "possible salient failure: " + v.detail);
}

sandbox::ActionCode Agent::generate_verification(Session& session) const {
    if (session.iterations.empty()) throw WrongState("nothing to verify");
    const IterationRecord& last = session.iterations.back();
    if (!last.result || !last.result->ok() || !last.response || !last.response->final_step)
        throw WrongState("the last round did not finish a final step");
    auto snippets = context::surface_index().retrieve(session.instruction, config_.context_k);
    std::string prompt = build_verification_prompt(session, last, snippets);
    llm::Provider& p = config_.verifier ? *config_.verifier : *provider_;
    AgentResponse reply = parse_response(complete(session, p, prompt, "verification"));
    if (!reply.has_code()) throw ParseError("verification reply carried no code: " + reply.not_possible().reasons);
    return reply.code();
}

Verification Agent::verify(Session& session) const {
    switch (config_.verification) {
        case VerificationMode::none: return {"", true, "verification disabled"};
        case VerificationMode::oracle: return config_.oracle(session);
        case VerificationMode::llm: break;
    }
    sandbox::ActionCode code;
    try {
        code = generate_verification(session);
    } catch (const ParseError& e) {
        return {"", false, std::string("verification reply unusable: ") + e.what()};
    }
    const safety::RuleSet& ro = safety::read_only_rules();
    safety::Verdict verdict = analyze_or_allow(code, ro);
    if (verdict.decision != safety::Decision::Allow) {
        std::string why = verdict.reasons.empty() ? "not allowed" : verdict.reasons.front().reason;
        return {code.hash(), false, "verification script blocked: " + why};
    }
    auto [ignored, result] = sandbox::execute(code, session.state, config_.limits, safety::make_guard(ro));
    if (!result.ok()) return {code.hash(), false, "verification script failed: " + (result.error ? result.error->display() : std::string(sandbox::to_string(result.status)))};
    if (has_line(result.console, "VERIFY:FAIL")) return {code.hash(), false, "verification printed VERIFY:FAIL"};
    if (has_line(result.console, "VERIFY:PASS")) return {code.hash(), true, "VERIFY:PASS"};
    return {code.hash(), false, "verification printed neither VERIFY:PASS nor VERIFY:FAIL"};
}

void Agent::run(Session& session) const {
    while (session.status == SessionStatus::running) {
        try {
            step(session);
        } catch (const WrongState&) {
            throw;
        } catch (const Error& e) {
            if (!is_terminal(session.status)) fail(session, e.kind() + ": " + e.what());
            if (e.kind() != "BudgetExceeded") throw;
            return;
        }
    }
}

void Agent::incorporate_feedback(Session& session, const Feedback& feedback) const {
    if (session.status != SessionStatus::awaiting_approval && session.status != SessionStatus::awaiting_user)
        throw WrongState("session " + session.id + " is " + std::string(to_string(session.status)) + ", not paused");
    IterationRecord& last = session.iterations.back();
    if (const auto* a = std::get_if<ApprovalDecision>(&feedback)) {
        if (session.status != SessionStatus::awaiting_approval) throw WrongState("session " + session.id + " has no pending approval");
        last.approval = a->grant;
        if (a->grant) {
            set_status(session, SessionStatus::running, "approved");
            execute_round(session, last, true);
        } else {
            set_status(session, SessionStatus::running, "approval declined");
            check_budget(session);
        }
        return;
    }
    const auto& f = std::get<UserFeedback>(feedback);
    if (session.status == SessionStatus::awaiting_approval) last.approval = false;
    if (!f.text.empty()) last.feedback.push_back(f.text);
    if (f.accomplished) {
        set_status(session, SessionStatus::succeeded, "confirmed by user");
    } else {
        set_status(session, SessionStatus::running, "user feedback");
        check_budget(session);
    }
}

void Agent::rollback(Session& session, std::optional<std::int64_t> snapshot_id) const {
    std::int64_t id = snapshot_id.value_or(session.pre_session_snapshot);
    session.state = store_.rollback(id, session.id, &session.state);
    if (!is_terminal(session.status)) set_status(session, SessionStatus::rolled_back, "rolled back to snapshot " + std::to_string(id));
}

}  // namespace jitagent::agent
