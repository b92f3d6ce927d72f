#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace jitagent::llm {

struct ChatMessage {
    std::string role;  // "user" or "assistant"
    std::string text;
    bool operator==(const ChatMessage&) const = default;
};

// Hints about why a request is being made. Providers that talk to real models
// ignore them; the scripted provider matches on them.
struct RequestContext {
    std::string purpose = "action";  // action | verification | review
    std::string instruction;
    int iteration = 1;
    std::string last_error;
    bool operator==(const RequestContext&) const = default;
};

struct ChatRequest {
    std::string system;
    std::vector<ChatMessage> messages;
    std::string model_name;
    double temperature = 0.0;
    int max_output = 2048;
    RequestContext context;

    // Throws DomainError on a negative temperature, a non-positive output
    // budget, unknown roles or two consecutive assistant turns.
    void validate() const;
    // Wire-relevant fields only; the context hints are excluded.
    nlohmann::json to_json() const;
    std::string digest() const;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------- scripted

struct ScriptEntry {
    std::optional<std::string> instruction;  // case-insensitive substring
    std::optional<int> iteration;
    std::optional<std::string> last_error;   // case-insensitive substring
    std::optional<std::string> purpose;      // exact
    std::string response;

    bool matches(const RequestContext& c) const;
};

struct ScriptTable {
    std::vector<ScriptEntry> entries;

    // Throws ParseError on malformed documents.
    static ScriptTable from_json(const nlohmann::json& j);
    static ScriptTable load(const std::filesystem::path& file);
    nlohmann::json to_json() const;
};

class ScriptedProvider : public Provider {
public:
    explicit ScriptedProvider(ScriptTable table, std::string label = "scripted")
        : table_(std::move(table)), label_(std::move(label)) {}
    // Throws NoMatch when no entry applies.
    std::string complete(const ChatRequest& request) override;
    std::string name() const override { return label_; }

private:
    ScriptTable table_;
    std::string label_;
};

// ---------------------------------------------------------------- http

enum class Wire { openai, anthropic };

struct HttpConfig {
    Wire wire = Wire::openai;
    std::string endpoint = "https://api.openai.com";  // scheme://host[:port]
    std::string path;                                 // empty: the wire's default
    std::string api_key_env = "OPENAI_API_KEY";
    int max_retries = 3;
    std::chrono::milliseconds backoff{250};
    std::chrono::seconds timeout{120};
};

class HttpChatProvider : public Provider {
public:
    explicit HttpChatProvider(HttpConfig config);
    // Throws AuthError when the credential variable is unset or the endpoint
    // rejects it, TransportError once retries are exhausted or on other
    // non-transient rejections.
    std::string complete(const ChatRequest& request) override;
    std::string name() const override;

private:
    HttpConfig config_;
};

// ---------------------------------------------------------------- cassettes

enum class CassetteMode { record, replay };

// Content-addressed request/response store: <dir>/<request digest>.json.
class CassetteProvider : public Provider {
public:
    CassetteProvider(std::filesystem::path dir, CassetteMode mode, std::shared_ptr<Provider> inner = nullptr);
    // Replay throws CassetteMiss for unknown requests.
    std::string complete(const ChatRequest& request) override;
    std::string name() const override;

private:
    std::filesystem::path dir_;
    CassetteMode mode_;
    std::shared_ptr<Provider> inner_;
    std::mutex mutex_;
};

// Per-session call accounting; the agent owns one per session.
class CallBudget {
public:
    explicit CallBudget(int max_calls) : max_(max_calls) {}
    // Throws BudgetExceeded once more than max_calls calls were charged.
    void charge();
    int used() const { return used_; }
    int max() const { return max_; }

private:
    int max_;
    int used_ = 0;
};

// ---------------------------------------------------------------- config

struct ProviderConfig {
    std::string name = "scripted";  // scripted | openai | anthropic
    std::string model;
    std::string endpoint;
    std::string api_key_env;
    std::filesystem::path script_table;
    std::filesystem::path cassette_dir;
    std::optional<CassetteMode> cassette_mode;
};

// Throws ConfigError for unknown provider names or missing table files.
std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

}  // namespace jitagent::llm
