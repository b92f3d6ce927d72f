#pragma once

#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "jitagent/sandbox/sandbox.hpp"

namespace jitagent::agent {

struct NotPossible {
    std::string reasons;
    bool operator==(const NotPossible&) const = default;
};

struct AgentResponse {
    std::string thinking;
    std::variant<sandbox::ActionCode, NotPossible> action;
    bool final_step = false;

    bool has_code() const { return std::holds_alternative<sandbox::ActionCode>(action); }
    const sandbox::ActionCode& code() const { return std::get<sandbox::ActionCode>(action); }
    const NotPossible& not_possible() const { return std::get<NotPossible>(action); }

    // "js:<code>" or "N/A:<reasons>".
    std::string action_code() const;
    // {"thinking":..., "action_code":..., "final_step":...} in that key order.
    nlohmann::ordered_json to_json() const;
    std::string serialize() const { return to_json().dump(); }

    bool operator==(const AgentResponse&) const = default;
};

// Extracts the first top-level JSON object from raw model output, tolerating
// code fences, surrounding prose and raw control characters inside strings.
// Throws ParseError when there is no object, a key is missing or mistyped,
// or the action tag is neither "js:" nor "N/A:".
AgentResponse parse_response(std::string_view text);

}  // namespace jitagent::agent
