#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "jitagent/agent/prompt.hpp"
#include "jitagent/agent/session.hpp"
#include "jitagent/llm/provider.hpp"
#include "jitagent/safety/safety.hpp"
#include "jitagent/sandbox/sandbox.hpp"
#include "jitagent/statekeeper/store.hpp"

namespace jitagent::agent {

// Decides whether a finished session did what was asked; used in place of
// verification code (the benchmark's oracle predicates).
using OracleCheck = std::function<Verification(const Session&)>;

enum class VerificationMode { llm, oracle, none };

struct AgentConfig {
    int max_iterations = 5;
    bool rollback_on_failure = false;
    bool auto_approve = false;
    int max_llm_calls = 10;
    std::string model_name;
    double temperature = 0.0;
    int context_k = context::kDefaultK;
    PromptOptions prompt;
    sandbox::ResourceLimits limits;
    VerificationMode verification = VerificationMode::llm;
    OracleCheck oracle;
    // Provider for verification code; the action provider when null.
    std::shared_ptr<llm::Provider> verifier;
};

struct ApprovalDecision {
    bool grant = false;
};
struct UserFeedback {
    std::string text;
    bool accomplished = false;
};
using Feedback = std::variant<ApprovalDecision, UserFeedback>;

class Agent {
public:
    Agent(AgentConfig config, std::shared_ptr<llm::Provider> provider, statekeeper::Store& store,
          safety::RuleSet rules = safety::default_rules());

    // New running session with its pre-session snapshot taken.
    Session start(std::string id, std::string instruction, host::HostState initial,
                  std::optional<std::string> fixture = std::nullopt) const;

    // One round: context, prompt, model, parse, analyze, and execution when
    // allowed. Throws WrongState unless the session is running with rounds
    // left; infrastructure failures propagate.
    const IterationRecord& step(Session& session) const;

    // Steps until the session is terminal or paused. Budget exhaustion and
    // provider failures end the session as failed.
    void run(Session& session) const;

    // Throws WrongState unless the session is paused.
    void incorporate_feedback(Session& session, const Feedback& feedback) const;

    // Restores the given snapshot (the pre-session one by default) into the
    // session state. A paused session becomes rolled_back.
    void rollback(Session& session, std::optional<std::int64_t> snapshot_id = std::nullopt) const;

    // Asks the verifier for read-only checking code.
    sandbox::ActionCode generate_verification(Session& session) const;

    const AgentConfig& config() const { return config_; }
    const safety::RuleSet& rules() const { return rules_; }

private:
    void execute_round(Session& session, IterationRecord& rec, bool approved) const;
    void after_execution(Session& session, IterationRecord& rec) const;
    Verification verify(Session& session) const;
    void set_status(Session& session, SessionStatus status, std::string outcome = {}) const;
    void fail(Session& session, std::string outcome) const;
    void check_budget(Session& session) const;
    void emit(Session& session, const std::string& kind, const nlohmann::json& payload) const;
    std::string complete(Session& session, llm::Provider& provider, const std::string& prompt, const std::string& purpose) const;

    AgentConfig config_;
    std::shared_ptr<llm::Provider> provider_;
    statekeeper::Store& store_;
    safety::RuleSet rules_;
};

}  // namespace jitagent::agent
