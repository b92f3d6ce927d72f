#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "jitagent/common.hpp"
#include "jitagent/llm/provider.hpp"

namespace jitagent::llm {

using nlohmann::json;

namespace {

bool transient(int status) { return status == 408 || status == 429 || status >= 500; }

json request_body(const HttpConfig& cfg, const ChatRequest& req) {
    json messages = json::array();
    if (cfg.wire == Wire::openai && !req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
    for (const ChatMessage& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.text}});
    json body = {{"model", req.model_name}, {"messages", messages}, {"temperature", req.temperature}, {"max_tokens", req.max_output}};
    if (cfg.wire == Wire::anthropic && !req.system.empty()) body["system"] = req.system;
    return body;
}

std::string response_text(const HttpConfig& cfg, const std::string& body) {
    try {
        json j = json::parse(body);
        if (cfg.wire == Wire::openai) return j.at("choices").at(0).at("message").at("content").get<std::string>();
        std::string out;
        for (const json& block : j.at("content"))
            if (block.value("type", "") == "text") out += block.at("text").get<std::string>();
        return out;
    } catch (const json::exception& ex) {
        throw TransportError(std::string("unexpected response body: ") + ex.what());
    }
}

}  // namespace

HttpChatProvider::HttpChatProvider(HttpConfig config) : config_(std::move(config)) {
    if (config_.path.empty()) config_.path = config_.wire == Wire::openai ? "/v1/chat/completions" : "/v1/messages";
    if (config_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

std::string HttpChatProvider::name() const { return config_.wire == Wire::openai ? "openai" : "anthropic"; }

std::string HttpChatProvider::complete(const ChatRequest& request) {
    request.validate();
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw AuthError("credential variable " + config_.api_key_env + " is not set");

    httplib::Headers headers;
    if (config_.wire == Wire::openai) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    } else {
        headers.emplace("x-api-key", key);
        headers.emplace("anthropic-version", "2023-06-01");
    }
    const std::string body = request_body(config_, request).dump();

    std::string last_problem;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1 << std::min(attempt - 1, 10)));
        httplib::Client client(config_.endpoint);
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(config_.timeout);
        auto res = client.Post(config_.path, headers, body, "application/json");
        if (!res) {
            last_problem = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 401 || res->status == 403)
            throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
        if (res->status >= 200 && res->status < 300) return response_text(config_, res->body);
        last_problem = "HTTP " + std::to_string(res->status);
        if (!transient(res->status)) throw TransportError("request rejected: " + last_problem + ": " + res->body.substr(0, 200));
    }
    throw TransportError(last_problem + " after " + std::to_string(config_.max_retries + 1) + " attempts");
}

}  // namespace jitagent::llm
