#include "jitagent/service/service.hpp"

#include <future>
#include <random>

#include <httplib.h>

#include "jitagent/common.hpp"
#include "jitagent/sandbox/sandbox.hpp"

namespace jitagent::service {

using nlohmann::json;

json to_json(const SessionEvent& e) {
    return {{"session_id", e.session_id}, {"seq", e.seq}, {"kind", e.kind}, {"payload", e.payload}};
}

namespace {

std::string new_session_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%012llx", static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
    return buf;
}

int http_status(const Error& e) {
    const std::string kind = e.kind();
    if (kind == "DomainError" || kind == "ParseError" || kind == "UnknownFixture") return 400;
    if (kind == "NoMatch" || kind == "UnknownSnapshot") return 404;
    if (kind == "InvalidState" || kind == "WrongState") return 409;
    if (kind == "AuthError") return 403;
    return 500;
}

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    reply_json(res, status, {{"error", kind}, {"message", message}});
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DomainError("request body must be a JSON object");
    return j;
}

// Wraps a handler so library errors become JSON error replies.
httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            reply_error(res, http_status(e), e.kind(), e.what());
        } catch (const json::exception& e) {
            reply_error(res, 400, "DomainError", e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, "InternalError", e.what());
        }
    };
}

}  // namespace

const std::vector<RouteInfo>& Service::routes() {
    static const std::vector<RouteInfo> r = {
        {"POST", "/sessions", true},
        {"GET", "/sessions", false},
        {"GET", "/sessions/{id}", false},
        {"GET", "/sessions/{id}/events", false},
        {"POST", "/sessions/{id}/approve", true},
        {"POST", "/sessions/{id}/feedback", true},
        {"POST", "/sessions/{id}/rollback", true},
        {"GET", "/state", false},
        {"GET", "/audit", false},
        {"POST", "/execute", true},
        {"GET", "/ui", false},
    };
    return r;
}

Service::Service(ServiceConfig config, std::shared_ptr<llm::Provider> provider)
    : config_(std::move(config)), provider_(std::move(provider)), store_(config_.data_dir) {
    if (!provider_) throw ConfigError("the service needs a provider");
    config_.agent.limits.validate();
    if (auto saved = store_.load_state()) {
        live_ = std::move(*saved);
    } else {
        live_ = host::init_fixture(config_.fixture);
        store_.save_state(live_);
    }
    recover();
    worker_ = std::jthread([this](std::stop_token st) { worker_loop(st); });
}

Service::~Service() {
    stop();
    worker_.request_stop();
    jobs_cv_.notify_all();
}

void Service::recover() {
    for (const json& rec : store_.load_sessions()) {
        auto e = std::make_unique<Entry>();
        try {
            e->id = rec.at("session").at("id").get<std::string>();
            e->isolated = rec.value("isolated", false);
            e->record = rec.at("session");
            e->state = host::deserialize(rec.at("state").get<std::string>());
            for (const json& ev : rec.value("events", json::array()))
                e->events.push_back({e->id, ev.at("seq").get<std::int64_t>(), ev.at("kind").get<std::string>(), ev.at("payload")});
        } catch (const std::exception&) {
            continue;  // unreadable record; the audit log still has its history
        }
        auto status = agent::session_status_from_string(e->record.at("status").get<std::string>());
        if (!agent::is_terminal(status)) {
            std::string outcome = "service restarted while the session was " + std::string(agent::to_string(status));
            e->record["status"] = "failed";
            e->record["outcome"] = outcome;
            e->events.push_back({e->id, static_cast<std::int64_t>(e->events.size()) + 1, "status_changed",
                                 {{"status", "failed"}, {"outcome", outcome}}});
            persist(*e);
        }
        e->terminal = true;
        sessions_[e->id] = std::move(e);
    }
}

void Service::persist(const Entry& e) {
    json events = json::array();
    for (const SessionEvent& ev : e.events) events.push_back({{"seq", ev.seq}, {"kind", ev.kind}, {"payload", ev.payload}});
    store_.save_session(e.id, {{"session", e.record}, {"state", host::serialize(e.state)}, {"isolated", e.isolated}, {"events", events}});
}

// Worker ---------------------------------------------------------------------

void Service::worker_loop(std::stop_token st) {
    for (;;) {
        std::function<void()> job;
        {
            std::unique_lock lock(jobs_mu_);
            jobs_cv_.wait(lock, st, [&] { return !jobs_.empty(); });
            if (jobs_.empty()) return;
            job = std::move(jobs_.front());
            jobs_.pop_front();
            busy_ = true;
        }
        job();
        {
            std::lock_guard lock(jobs_mu_);
            busy_ = false;
        }
        idle_cv_.notify_all();
    }
}

void Service::post(std::function<void()> job) {
    {
        std::lock_guard lock(jobs_mu_);
        jobs_.push_back(std::move(job));
    }
    jobs_cv_.notify_one();
}

template <class F>
auto Service::call(F&& f) -> decltype(f()) {
    using R = decltype(f());
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(f));
    std::future<R> result = task->get_future();
    post([task] { (*task)(); });
    return result.get();
}

void Service::drain() {
    std::unique_lock lock(jobs_mu_);
    idle_cv_.wait(lock, [&] { return jobs_.empty() && !busy_; });
}

// Sessions -------------------------------------------------------------------

void Service::publish(Entry& e, const std::string& kind, const json& payload) {
    {
        std::lock_guard lock(mu_);
        e.events.push_back({e.id, static_cast<std::int64_t>(e.events.size()) + 1, kind, payload});
        e.record = agent::to_json(*e.session);
        e.state = e.session->state;
        if (!e.isolated && live_owner_ == e.id) {
            live_ = e.state;
            store_.save_state(live_);
        }
        if (agent::is_terminal(e.session->status)) {
            e.terminal = true;
            if (live_owner_ == e.id) live_owner_.reset();
        }
        persist(e);
    }
    events_cv_.notify_all();
}

void Service::sync(Entry& e) {
    {
        std::lock_guard lock(mu_);
        e.record = agent::to_json(*e.session);
        e.state = e.session->state;
        if (!e.isolated && live_owner_ == e.id) {
            live_ = e.state;
            store_.save_state(live_);
        }
        if (agent::is_terminal(e.session->status)) {
            e.terminal = true;
            if (live_owner_ == e.id) live_owner_.reset();
        }
        persist(e);
    }
    events_cv_.notify_all();
}

void Service::run_session(Entry& e, const std::function<void(agent::Session&)>& action) {
    try {
        action(*e.session);
    } catch (const Error&) {
        // the agent has already recorded the failure on the session
    }
    sync(e);
}

Service::Entry& Service::entry(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NoMatch("unknown session '" + id + "'");
    return *it->second;
}

const Service::Entry& Service::entry(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NoMatch("unknown session '" + id + "'");
    return *it->second;
}

std::string Service::create_session(const std::string& instruction, const CreateOptions& options) {
    if (instruction.find_first_not_of(" \t\r\n") == std::string::npos) throw DomainError("instruction must not be empty");
    agent::AgentConfig cfg = config_.agent;
    if (options.max_iterations) {
        if (*options.max_iterations < 1 || *options.max_iterations > 50) throw DomainError("max_iterations must be in 1..50");
        cfg.max_iterations = *options.max_iterations;
    }
    safety::RuleSet rules;
    if (options.rules_profile == "default") rules = config_.rules;
    else if (options.rules_profile == "read-only") rules = safety::read_only_rules();
    else throw DomainError("unknown rules profile '" + options.rules_profile + "'");
    bool isolated = options.isolated || options.fixture.has_value();

    auto e = std::make_unique<Entry>();
    e->id = new_session_id();
    e->isolated = isolated;
    e->agent = std::make_unique<agent::Agent>(cfg, provider_, store_, rules);
    host::HostState initial;
    if (isolated) {
        initial = host::init_fixture(options.fixture.value_or(config_.fixture));
    }
    {
        std::lock_guard lock(mu_);
        if (stopping_) throw InvalidState("the service is shutting down");
        if (!isolated) {
            if (live_owner_) throw InvalidState("the live host is in use by session " + *live_owner_);
            live_owner_ = e->id;
            initial = live_;
        }
    }
    try {
        e->session = e->agent->start(e->id, instruction, initial, options.fixture);
    } catch (...) {
        std::lock_guard lock(mu_);
        if (live_owner_ == e->id) live_owner_.reset();
        throw;
    }
    Entry& ref = *e;
    ref.session->on_event = [this, &ref](const std::string& kind, const json& payload) { publish(ref, kind, payload); };
    {
        std::lock_guard lock(mu_);
        sessions_[ref.id] = std::move(e);
    }
    publish(ref, "status_changed", {{"status", "running"}, {"outcome", ""}});
    post([this, &ref] { run_session(ref, [&](agent::Session& s) { ref.agent->run(s); }); });
    return ref.id;
}

json Service::session_json(const std::string& id) const {
    std::lock_guard lock(mu_);
    const Entry& e = entry(id);
    json j = e.record;
    j["state"] = host::to_json(e.state);
    j["isolated"] = e.isolated;
    j["event_count"] = e.events.size();
    return j;
}

json Service::list_sessions() const {
    std::lock_guard lock(mu_);
    json out = json::array();
    for (const auto& [id, e] : sessions_)
        out.push_back({{"id", id},
                       {"instruction", e->record.value("instruction", "")},
                       {"status", e->record.value("status", "")},
                       {"created_at", e->record.value("created_at", std::int64_t{0})},
                       {"isolated", e->isolated}});
    return out;
}

void Service::approve(const std::string& id, bool grant) {
    Entry* e = nullptr;
    {
        std::lock_guard lock(mu_);
        e = &entry(id);
        if (!e->session || e->record.value("status", "") != "awaiting_approval")
            throw WrongState("session " + id + " is not awaiting approval");
    }
    post([this, e, grant] {
        run_session(*e, [&](agent::Session& s) {
            e->agent->incorporate_feedback(s, agent::ApprovalDecision{grant});
            if (s.status == agent::SessionStatus::running) e->agent->run(s);
        });
    });
}

void Service::feedback(const std::string& id, const std::string& text, bool accomplished) {
    Entry* e = nullptr;
    {
        std::lock_guard lock(mu_);
        e = &entry(id);
        std::string status = e->record.value("status", "");
        if (!e->session || (status != "awaiting_user" && status != "awaiting_approval"))
            throw WrongState("session " + id + " is not waiting for feedback");
    }
    post([this, e, text, accomplished] {
        run_session(*e, [&](agent::Session& s) {
            e->agent->incorporate_feedback(s, agent::UserFeedback{text, accomplished});
            if (s.status == agent::SessionStatus::running) e->agent->run(s);
        });
    });
}

json Service::rollback(const std::string& id, std::optional<std::int64_t> snapshot_id) {
    Entry* e = nullptr;
    {
        std::lock_guard lock(mu_);
        e = &entry(id);
    }
    return call([this, e, snapshot_id] {
        const bool live = !e->isolated;
        if (live) {
            std::lock_guard lock(mu_);
            if (live_owner_ && *live_owner_ != e->id) throw InvalidState("the live host is in use by " + *live_owner_);
            live_owner_ = e->id;
            if (e->session) e->session->state = live_;
        }
        try {
            if (e->session) {
                e->agent->rollback(*e->session, snapshot_id);
                sync(*e);
            } else {
                // recovered from disk: restore through the store directly
                std::int64_t snap = snapshot_id.value_or(e->record.at("pre_session_snapshot").get<std::int64_t>());
                std::lock_guard lock(mu_);
                host::HostState restored = store_.rollback(snap, e->id, live ? &live_ : &e->state);
                e->state = restored;
                persist(*e);
            }
        } catch (...) {
            std::lock_guard lock(mu_);
            if (live_owner_ == e->id && e->terminal) live_owner_.reset();
            throw;
        }
        std::lock_guard lock(mu_);
        if (live) {
            live_ = e->state;
            store_.save_state(live_);
            if (live_owner_ == e->id && e->terminal) live_owner_.reset();
        }
        return json{{"status", e->record.value("status", "")}, {"state_hash", host::state_hash(e->state)}};
    });
}

json Service::execute_raw(const std::string& code_text, bool approved) {
    if (!config_.allow_raw_exec) throw AuthError("raw execution is disabled; start the service with --allow-raw-exec");
    return call([this, code_text, approved] {
        sandbox::ActionCode code{"js", code_text};
        host::HostState current;
        {
            std::lock_guard lock(mu_);
            if (live_owner_) throw InvalidState("the live host is in use by session " + *live_owner_);
            live_owner_ = "raw";
            current = live_;
        }
        struct Release {
            Service* self;
            ~Release() {
                std::lock_guard lock(self->mu_);
                self->live_owner_.reset();
            }
        } release{this};
        safety::Verdict verdict{safety::Decision::Allow, {}};
        try {
            verdict = safety::analyze(code, config_.rules);
        } catch (const Error&) {
            // unparsable code is left to the interpreter, which reports it
        }
        statekeeper::AuditEntry audit;
        audit.session_id = "raw";
        audit.code_hash = code.hash();
        audit.tag = "raw";
        audit.snapshot_id = store_.take_snapshot(current, "raw", 0);
        bool allowed = verdict.decision == safety::Decision::Allow || (verdict.decision == safety::Decision::NeedsApproval && approved);
        audit.verdict_decision = std::string(safety::to_string(verdict.decision)) +
                                 (verdict.decision == safety::Decision::NeedsApproval && approved ? ":approved" : "");
        json out = {{"verdict", safety::to_json(verdict)}, {"snapshot_id", audit.snapshot_id}};
        if (!allowed) {
            audit.result_status = "not_executed";
            store_.append_audit(audit);
            sandbox::ExecutionResult denied;
            denied.status = sandbox::Status::denied;
            out["result"] = sandbox::to_json(denied);
            return out;
        }
        auto [after, result] = sandbox::execute(code, current, config_.agent.limits, safety::make_guard(config_.rules, approved));
        audit.result_status = std::string(sandbox::to_string(result.status));
        audit.state_diff = result.state_diff;
        store_.append_audit(audit);
        {
            std::lock_guard lock(mu_);
            live_ = after;
            store_.save_state(live_);
        }
        out["result"] = sandbox::to_json(result);
        return out;
    });
}

json Service::live_state() const {
    std::lock_guard lock(mu_);
    return {{"state", host::to_json(live_)}, {"state_hash", host::state_hash(live_)}, {"owner", live_owner_ ? json(*live_owner_) : json(nullptr)}};
}

std::vector<SessionEvent> Service::events(const std::string& id, std::int64_t from, bool& done) const {
    std::lock_guard lock(mu_);
    const Entry& e = entry(id);
    std::vector<SessionEvent> out;
    for (const SessionEvent& ev : e.events)
        if (ev.seq >= from) out.push_back(ev);
    done = e.terminal;
    return out;
}

void Service::wait_events(const std::string& id, std::int64_t from, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    const Entry& e = entry(id);
    events_cv_.wait_for(lock, timeout, [&] {
        return stopping_ || e.terminal || static_cast<std::int64_t>(e.events.size()) >= from;
    });
}

// HTTP -----------------------------------------------------------------------

void Service::setup_routes() {
    httplib::Server& s = *server_;
    const std::string id_re = "([A-Za-z0-9_-]+)";

    s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
        json b = body_of(req);
        CreateOptions o;
        if (b.contains("fixture") && !b["fixture"].is_null()) o.fixture = b["fixture"].get<std::string>();
        if (b.contains("max_iterations") && !b["max_iterations"].is_null()) o.max_iterations = b["max_iterations"].get<int>();
        o.rules_profile = b.value("rules", "default");
        o.isolated = b.value("host", "live") == "isolated";
        std::string id = create_session(b.value("instruction", ""), o);
        reply_json(res, 201, {{"id", id}});
    }));
    s.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) { reply_json(res, 200, list_sessions()); }));
    s.Get("/sessions/" + id_re, guarded([this](const httplib::Request& req, httplib::Response& res) {
        reply_json(res, 200, session_json(req.matches[1]));
    }));
    s.Get("/sessions/" + id_re + "/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1];
        std::int64_t from = 1;
        if (req.has_header("Last-Event-ID")) from = std::stoll(req.get_header_value("Last-Event-ID")) + 1;
        if (req.has_param("from")) from = std::stoll(req.get_param_value("from"));
        bool done = false;
        events(id, from, done);  // 404 before the stream starts
        auto cursor = std::make_shared<std::int64_t>(std::max<std::int64_t>(from, 1));
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, id, cursor](std::size_t, httplib::DataSink& sink) {
            wait_events(id, *cursor, std::chrono::milliseconds(250));
            bool finished = false;
            for (const SessionEvent& ev : events(id, *cursor, finished)) {
                std::string frame = "id: " + std::to_string(ev.seq) + "\nevent: " + ev.kind + "\ndata: " + to_json(ev).dump() + "\n\n";
                if (!sink.write(frame.data(), frame.size())) return false;
                *cursor = ev.seq + 1;
            }
            bool stopping;
            {
                std::lock_guard lock(mu_);
                stopping = stopping_;
            }
            if (finished || stopping) {
                sink.done();
                return true;
            }
            return sink.is_writable();
        });
    }));
    s.Post("/sessions/" + id_re + "/approve", guarded([this](const httplib::Request& req, httplib::Response& res) {
        json b = body_of(req);
        if (!b.contains("grant") || !b["grant"].is_boolean()) throw DomainError("body needs a boolean 'grant'");
        approve(req.matches[1], b["grant"].get<bool>());
        reply_json(res, 202, {{"accepted", true}});
    }));
    s.Post("/sessions/" + id_re + "/feedback", guarded([this](const httplib::Request& req, httplib::Response& res) {
        json b = body_of(req);
        feedback(req.matches[1], b.value("text", ""), b.value("accomplished", false));
        reply_json(res, 202, {{"accepted", true}});
    }));
    s.Post("/sessions/" + id_re + "/rollback", guarded([this](const httplib::Request& req, httplib::Response& res) {
        json b = body_of(req);
        std::optional<std::int64_t> snap;
        if (b.contains("snapshot_id") && !b["snapshot_id"].is_null()) snap = b["snapshot_id"].get<std::int64_t>();
        reply_json(res, 200, rollback(req.matches[1], snap));
    }));
    s.Get("/state", guarded([this](const httplib::Request&, httplib::Response& res) { reply_json(res, 200, live_state()); }));
    s.Get("/audit", guarded([this](const httplib::Request& req, httplib::Response& res) {
        statekeeper::AuditFilter f;
        if (req.has_param("session")) f.session_id = req.get_param_value("session");
        if (req.has_param("from")) f.from_seq = std::stoll(req.get_param_value("from"));
        if (req.has_param("to")) f.to_seq = std::stoll(req.get_param_value("to"));
        json out = json::array();
        for (const auto& e : store_.query_audit(f)) out.push_back(json::parse(statekeeper::to_json(e).dump()));
        reply_json(res, 200, out);
    }));
    s.Post("/execute", guarded([this](const httplib::Request& req, httplib::Response& res) {
        if (!config_.allow_raw_exec) {
            reply_error(res, 403, "Forbidden", "raw execution is disabled; start the service with --allow-raw-exec");
            return;
        }
        json b = body_of(req);
        if (!b.contains("code") || !b["code"].is_string()) throw DomainError("body needs a string 'code'");
        reply_json(res, 200, execute_raw(b["code"].get<std::string>(), b.value("approved", false)));
    }));
    if (!config_.ui_dir.empty() && std::filesystem::is_directory(config_.ui_dir)) s.set_mount_point("/ui", config_.ui_dir.string());
}

int Service::start() {
    server_ = std::make_unique<httplib::Server>();
    server_->new_task_queue = [] { return new httplib::ThreadPool(16); };
    setup_routes();
    if (config_.port == 0) {
        port_ = server_->bind_to_any_port(config_.host);
    } else {
        port_ = server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    if (port_ <= 0) throw ConfigError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    server_thread_ = std::jthread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void Service::stop() {
    {
        std::unique_lock lock(mu_);
        if (stopping_) {
            // another caller is shutting down; wait for it to finish
            events_cv_.wait(lock, [&] { return stopped_; });
            return;
        }
        stopping_ = true;
    }
    events_cv_.notify_all();
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
    {
        std::lock_guard lock(mu_);
        stopped_ = true;
    }
    events_cv_.notify_all();
}

void Service::wait() {
    std::unique_lock lock(mu_);
    events_cv_.wait(lock, [&] { return stopped_; });
}

}  // namespace jitagent::service
