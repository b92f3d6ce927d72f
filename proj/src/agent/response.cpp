#include "jitagent/agent/response.hpp"

#include "jitagent/common.hpp"

namespace jitagent::agent {

using nlohmann::json;

std::string AgentResponse::action_code() const {
    return has_code() ? code().serialize() : "N/A:" + not_possible().reasons;
}

nlohmann::ordered_json AgentResponse::to_json() const {
    nlohmann::ordered_json j;
    j["thinking"] = thinking;
    j["action_code"] = action_code();
    j["final_step"] = final_step;
    return j;
}

namespace {

// End of the balanced {...} starting at `open`, honouring strings; npos if
// the object never closes.
std::size_t object_end(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i;
    }
    return std::string_view::npos;
}

// Models often emit literal newlines or tabs inside JSON strings.
std::string escape_raw_controls(std::string_view s) {
    std::string out;
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string && c == '\\' && i + 1 < s.size()) {
            out += c;
            out += s[++i];
            continue;
        }
        if (c == '"') in_string = !in_string;
        if (in_string && static_cast<unsigned char>(c) < 0x20) {
            if (c == '\n') out += "\\n";
            else if (c == '\r') out += "\\r";
            else if (c == '\t') out += "\\t";
            else {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", c);
                out += buf;
            }
            continue;
        }
        out += c;
    }
    return out;
}

std::optional<json> first_object(std::string_view text) {
    for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
        std::size_t close = object_end(text, open);
        if (close == std::string_view::npos) continue;
        std::string_view candidate = text.substr(open, close - open + 1);
        for (const std::string& attempt : {std::string(candidate), escape_raw_controls(candidate)}) {
            try {
                json j = json::parse(attempt);
                if (j.is_object()) return j;
            } catch (const json::exception&) {
            }
        }
    }
    return std::nullopt;
}

bool to_bool(const json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string() && v == "true") return true;
    if (v.is_string() && v == "false") return false;
    throw ParseError("final_step must be true or false, got " + v.dump());
}

}  // namespace

AgentResponse parse_response(std::string_view text) {
    std::optional<json> obj = first_object(text);
    if (!obj) throw ParseError("no JSON object found in the response");
    const json& j = *obj;
    if (!j.contains("action_code")) throw ParseError("response is missing \"action_code\"");
    if (!j.at("action_code").is_string()) throw ParseError("\"action_code\" must be a string");
    if (!j.contains("final_step")) throw ParseError("response is missing \"final_step\"");

    AgentResponse r;
    r.final_step = to_bool(j.at("final_step"));
    std::string action = j.at("action_code").get<std::string>();
    if (action.rfind("js:", 0) == 0) {
        r.action = sandbox::ActionCode::js(action.substr(3));
    } else if (action.rfind("N/A:", 0) == 0) {
        r.action = NotPossible{action.substr(4)};
    } else {
        throw ParseError("action_code must start with \"js:\" or \"N/A:\"");
    }
    if (j.contains("thinking")) {
        if (!j.at("thinking").is_string()) throw ParseError("\"thinking\" must be a string");
        r.thinking = j.at("thinking").get<std::string>();
    } else if (r.has_code()) {
        throw ParseError("response is missing \"thinking\"");
    }
    return r;
}

}  // namespace jitagent::agent
