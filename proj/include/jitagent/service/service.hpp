#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/agent/agent.hpp"
#include "jitagent/llm/provider.hpp"
#include "jitagent/safety/safety.hpp"
#include "jitagent/statekeeper/store.hpp"

namespace httplib {
class Server;
}

namespace jitagent::service {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8787;  // 0 picks a free port
    std::filesystem::path data_dir = "jitagent-data";
    // Initial live host when the data directory holds no saved state.
    std::string fixture = "default";
    safety::RuleSet rules = safety::default_rules();
    agent::AgentConfig agent;
    bool allow_raw_exec = false;
    std::filesystem::path ui_dir;  // served under /ui when it exists
};

struct SessionEvent {
    std::string session_id;
    std::int64_t seq = 0;
    std::string kind;
    nlohmann::json payload;
};
nlohmann::json to_json(const SessionEvent& e);

struct CreateOptions {
    std::optional<std::string> fixture;  // implies an isolated host
    std::optional<int> max_iterations;
    std::string rules_profile = "default";  // default | read-only
    bool isolated = false;
};

struct RouteInfo {
    std::string method;
    std::string pattern;
    bool mutates = false;  // may change host state or session state
};

class Service {
public:
    // Loads the live host and the session records from the data directory;
    // sessions that were still active are marked failed.
    Service(ServiceConfig config, std::shared_ptr<llm::Provider> provider);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves on a background thread. Returns the bound port.
    int start();
    void stop();
    // Blocks until stop(), called from elsewhere, has finished.
    void wait();
    int port() const { return port_; }

    static const std::vector<RouteInfo>& routes();

    // The operations behind the endpoints. Errors: DomainError (bad input),
    // InvalidState (live host busy), NoMatch (unknown session), WrongState,
    // UnknownSnapshot, UnknownFixture.
    std::string create_session(const std::string& instruction, const CreateOptions& options = {});
    nlohmann::json session_json(const std::string& id) const;
    nlohmann::json list_sessions() const;
    void approve(const std::string& id, bool grant);
    void feedback(const std::string& id, const std::string& text, bool accomplished);
    nlohmann::json rollback(const std::string& id, std::optional<std::int64_t> snapshot_id);
    nlohmann::json execute_raw(const std::string& code, bool approved = false);
    nlohmann::json live_state() const;
    // Events with seq >= from; `done` tells whether the session is terminal.
    std::vector<SessionEvent> events(const std::string& id, std::int64_t from, bool& done) const;
    // Waits up to `timeout` for an event with seq >= from or for termination.
    void wait_events(const std::string& id, std::int64_t from, std::chrono::milliseconds timeout) const;
    // Blocks until the worker has drained its queue.
    void drain();

    statekeeper::Store& store() { return store_; }

private:
    struct Entry {
        std::string id;
        bool isolated = false;
        std::unique_ptr<agent::Agent> agent;  // null for sessions recovered from disk
        std::optional<agent::Session> session;
        nlohmann::json record;  // last published session JSON
        host::HostState state;  // last published host state
        std::vector<SessionEvent> events;
        bool terminal = false;
    };

    void setup_routes();
    void post(std::function<void()> job);
    template <class F>
    auto call(F&& f) -> decltype(f());
    void worker_loop(std::stop_token st);
    void recover();
    void publish(Entry& e, const std::string& kind, const nlohmann::json& payload);
    void sync(Entry& e);
    void persist(const Entry& e);
    void run_session(Entry& e, const std::function<void(agent::Session&)>& action);
    Entry& entry(const std::string& id);
    const Entry& entry(const std::string& id) const;

    ServiceConfig config_;
    std::shared_ptr<llm::Provider> provider_;
    statekeeper::Store store_;
    std::unique_ptr<httplib::Server> server_;
    std::jthread server_thread_;
    int port_ = 0;

    mutable std::mutex mu_;
    mutable std::condition_variable events_cv_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
    host::HostState live_;
    std::optional<std::string> live_owner_;
    bool stopping_ = false;
    bool stopped_ = false;

    std::mutex jobs_mu_;
    std::condition_variable_any jobs_cv_;
    std::condition_variable idle_cv_;
    std::deque<std::function<void()>> jobs_;
    bool busy_ = false;
    std::jthread worker_;
};

}  // namespace jitagent::service
