#include "jitagent/llm/provider.hpp"

#include <algorithm>
#include <cctype>

#include "jitagent/common.hpp"

namespace jitagent::llm {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool contains_ci(const std::string& hay, const std::string& needle) { return lower(hay).find(lower(needle)) != std::string::npos; }

}  // namespace

void ChatRequest::validate() const {
    if (temperature < 0) throw DomainError("temperature must be >= 0");
    if (max_output <= 0) throw DomainError("max_output must be positive");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const std::string& role = messages[i].role;
        if (role != "user" && role != "assistant") throw DomainError("unknown message role '" + role + "'");
        if (i > 0 && role == "assistant" && messages[i - 1].role == "assistant")
            throw DomainError("two consecutive assistant messages");
    }
}

json ChatRequest::to_json() const {
    json msgs = json::array();
    for (const ChatMessage& m : messages) msgs.push_back({{"role", m.role}, {"text", m.text}});
    return {{"system", system}, {"messages", msgs}, {"model", model_name}, {"temperature", temperature}, {"max_output", max_output}};
}

std::string ChatRequest::digest() const { return sha256_hex(to_json().dump()); }

bool ScriptEntry::matches(const RequestContext& c) const {
    if (purpose ? c.purpose != *purpose : c.purpose != "action") return false;
    if (instruction && !contains_ci(c.instruction, *instruction)) return false;
    if (iteration && c.iteration != *iteration) return false;
    if (last_error && !contains_ci(c.last_error, *last_error)) return false;
    return true;
}

ScriptTable ScriptTable::from_json(const json& j) {
    ScriptTable t;
    try {
        if (!j.is_object() || !j.contains("entries") || !j.at("entries").is_array())
            throw ParseError("script table needs an 'entries' array");
        for (const json& e : j.at("entries")) {
            ScriptEntry entry;
            if (e.contains("when")) {
                for (const auto& [key, value] : e.at("when").items()) {
                    if (key == "instruction") entry.instruction = value.get<std::string>();
                    else if (key == "iteration") entry.iteration = value.get<int>();
                    else if (key == "last_error") entry.last_error = value.get<std::string>();
                    else if (key == "purpose") entry.purpose = value.get<std::string>();
                    else throw ParseError("unknown matcher '" + key + "'");
                }
            }
            const json& r = e.at("response");
            entry.response = r.is_string() ? r.get<std::string>() : r.dump();
            t.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& ex) {
        throw ParseError(std::string("malformed script table: ") + ex.what());
    }
    return t;
}

ScriptTable ScriptTable::load(const std::filesystem::path& file) {
    std::string text = read_file(file.string());
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw ParseError("script table " + file.string() + ": " + ex.what());
    }
    return from_json(j);
}

json ScriptTable::to_json() const {
    json entries = json::array();
    for (const ScriptEntry& e : this->entries) {
        json when = json::object();
        if (e.instruction) when["instruction"] = *e.instruction;
        if (e.iteration) when["iteration"] = *e.iteration;
        if (e.last_error) when["last_error"] = *e.last_error;
        if (e.purpose) when["purpose"] = *e.purpose;
        entries.push_back({{"when", when}, {"response", e.response}});
    }
    return {{"entries", entries}};
}

std::string ScriptedProvider::complete(const ChatRequest& request) {
    for (const ScriptEntry& e : table_.entries)
        if (e.matches(request.context)) return e.response;
    throw NoMatch("no script entry for purpose '" + request.context.purpose + "', iteration " +
                  std::to_string(request.context.iteration) + ", instruction '" + request.context.instruction + "'");
}

void CallBudget::charge() {
    if (used_ >= max_) throw BudgetExceeded("LLM call budget of " + std::to_string(max_) + " calls exhausted");
    ++used_;
}

CassetteProvider::CassetteProvider(std::filesystem::path dir, CassetteMode mode, std::shared_ptr<Provider> inner)
    : dir_(std::move(dir)), mode_(mode), inner_(std::move(inner)) {
    if (mode_ == CassetteMode::record) {
        if (!inner_) throw ConfigError("recording cassettes needs an underlying provider");
        std::filesystem::create_directories(dir_);
    }
}

std::string CassetteProvider::complete(const ChatRequest& request) {
    const std::string key = request.digest();
    const std::filesystem::path file = dir_ / (key + ".json");
    if (mode_ == CassetteMode::replay) {
        if (!std::filesystem::exists(file)) throw CassetteMiss("no cassette for request " + key);
        try {
            return json::parse(read_file(file.string())).at("response").get<std::string>();
        } catch (const json::exception& ex) {
            throw CassetteMiss("unreadable cassette " + key + ": " + ex.what());
        }
    }
    std::string response = inner_->complete(request);
    json record = {{"request", request.to_json()}, {"response", response}, {"provider", inner_->name()}};
    std::lock_guard lock(mutex_);
    write_file_atomic(file.string(), record.dump(2) + "\n");
    return response;
}

std::string CassetteProvider::name() const {
    return inner_ ? inner_->name() : "cassette:" + dir_.filename().string();
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
    std::shared_ptr<Provider> base;
    if (config.name == "scripted") {
        if (config.script_table.empty()) {
            if (config.cassette_mode != CassetteMode::replay) throw ConfigError("scripted provider needs a script table");
        } else {
            if (!std::filesystem::exists(config.script_table))
                throw ConfigError("script table not found: " + config.script_table.string());
            base = std::make_shared<ScriptedProvider>(ScriptTable::load(config.script_table));
        }
    } else if (config.name == "openai" || config.name == "anthropic") {
        HttpConfig http;
        if (config.name == "anthropic") {
            http.wire = Wire::anthropic;
            http.endpoint = "https://api.anthropic.com";
            http.api_key_env = "ANTHROPIC_API_KEY";
        }
        if (!config.endpoint.empty()) http.endpoint = config.endpoint;
        if (!config.api_key_env.empty()) http.api_key_env = config.api_key_env;
        base = std::make_shared<HttpChatProvider>(http);
    } else {
        throw ConfigError("unknown provider '" + config.name + "'");
    }
    if (config.cassette_mode) {
        if (config.cassette_dir.empty()) throw ConfigError("cassette mode needs a cassette directory");
        return std::make_shared<CassetteProvider>(config.cassette_dir, *config.cassette_mode,
                                                  *config.cassette_mode == CassetteMode::record ? base : nullptr);
    }
    return base;
}

}  // namespace jitagent::llm
