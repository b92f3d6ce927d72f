#include <atomic>
#include <chrono>
#include <iomanip>
#include <sstream>
#include <thread>

#include "jitagent/bench/bench.hpp"
#include "jitagent/common.hpp"

namespace jitagent::bench {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(TaskVerdict v) {
    switch (v) {
        case TaskVerdict::pass: return "pass";
        case TaskVerdict::fail: return "fail";
        case TaskVerdict::salient_fail: return "salient_fail";
        case TaskVerdict::not_possible: return "not_possible";
        case TaskVerdict::error: return "error";
    }
    return "error";
}

std::string golden_fixture_hash(const std::string& fixture) {
    std::string path = data_dir() + "/fixtures/" + fixture + ".json";
    return host::state_hash(host::deserialize(read_file(path)));
}

namespace {

// First failing clause, or nullopt when every clause holds.
std::optional<std::string> failing_clause(const TaskSpec& task, const json& ini, const json& fin) {
    for (const std::string& clause : task.oracle)
        if (!Predicate::parse(clause).evaluate(ini, fin)) return clause;
    return std::nullopt;
}

bool printed_error(const std::vector<std::string>& transcript) {
    return std::any_of(transcript.begin(), transcript.end(), [](const std::string& l) { return l.rfind("[error]", 0) == 0; });
}

std::vector<std::string> transcript_of(const agent::Session& s) {
    std::vector<std::string> out;
    for (const auto& r : s.iterations)
        if (r.result) out.insert(out.end(), r.result->console.begin(), r.result->console.end());
    return out;
}

}  // namespace

TaskVerdict verify_task(const TaskSpec& task, const host::HostState& initial, const host::HostState& final_state,
                        const std::vector<std::string>& transcript, bool claimed_done) {
    if (!failing_clause(task, oracle_view(initial), oracle_view(final_state, transcript))) return TaskVerdict::pass;
    if (claimed_done && !printed_error(transcript)) return TaskVerdict::salient_fail;
    return TaskVerdict::fail;
}

TaskVerdict verify_task(const TaskSpec& task, const host::HostState& final_state, const std::vector<std::string>& transcript,
                        bool claimed_done) {
    return verify_task(task, host::init_fixture(task.fixture), final_state, transcript, claimed_done);
}

int BenchReport::passed() const {
    return static_cast<int>(std::count_if(results.begin(), results.end(), [](const TaskResult& r) { return r.verdict == TaskVerdict::pass; }));
}

std::string BenchReport::rate() const { return std::to_string(passed()) + "/" + std::to_string(results.size()); }

json BenchReport::to_json(bool with_durations) const {
    ordered_json tasks = ordered_json::array();
    for (const TaskResult& r : results) {
        ordered_json t;
        t["id"] = r.task_id;
        t["app"] = r.app;
        t["instruction"] = r.instruction;
        t["verdict"] = to_string(r.verdict);
        t["iterations"] = r.iterations;
        t["llm_calls"] = r.llm_calls;
        if (with_durations) t["duration_ms"] = r.duration_ms;
        t["session_status"] = r.session_status;
        t["detail"] = r.detail;
        t["isolated"] = r.isolated;
        tasks.push_back(std::move(t));
    }
    ordered_json j;
    j["suite"] = suite;
    j["provider"] = provider;
    j["rate"] = rate();
    j["passed"] = passed();
    j["total"] = results.size();
    j["tasks"] = std::move(tasks);
    return json::parse(j.dump());
}

std::string BenchReport::render_table() const {
    std::size_t app_w = 3, task_w = 4;
    for (const TaskResult& r : results) {
        app_w = std::max(app_w, r.app.size());
        task_w = std::max(task_w, r.instruction.size());
    }
    auto mark = [](const TaskResult& r) -> std::string {
        switch (r.verdict) {
            case TaskVerdict::pass: return r.iterations > 1 ? "✓ (*)" : "✓";
            case TaskVerdict::fail: return "X";
            case TaskVerdict::salient_fail: return "X (salient)";
            case TaskVerdict::not_possible: return "N/A";
            case TaskVerdict::error: return "E";
        }
        return "E";
    };
    std::ostringstream out;
    out << "Suite " << suite << "\n\n";
    out << std::left << std::setw(static_cast<int>(app_w)) << "App" << "  " << std::setw(static_cast<int>(task_w)) << "Task"
        << "  " << provider << "\n";
    out << std::string(app_w, '-') << "  " << std::string(task_w, '-') << "  " << std::string(std::max<std::size_t>(provider.size(), 5), '-') << "\n";
    std::string last_app;
    for (const TaskResult& r : results) {
        std::string app = r.app == last_app ? "" : r.app;
        last_app = r.app;
        out << std::setw(static_cast<int>(app_w)) << app << "  " << std::setw(static_cast<int>(task_w)) << r.instruction << "  "
            << mark(r) << "\n";
    }
    out << std::setw(static_cast<int>(app_w)) << "" << "  " << std::setw(static_cast<int>(task_w)) << "Average" << "  " << rate() << "\n\n";
    out << "✓ pass, (*) more than one round, X fail, X (salient) claimed done but wrong, N/A declined, E error\n";
    return out.str();
}

namespace {

TaskResult run_task(const TaskSpec& task, const std::string& suite_name, const std::shared_ptr<llm::Provider>& provider,
                    statekeeper::Store& store, const BenchOptions& options) {
    TaskResult res;
    res.task_id = task.id;
    res.app = task.app;
    res.instruction = task.instruction;
    auto t0 = std::chrono::steady_clock::now();

    host::HostState initial = host::init_fixture(task.fixture);
    std::string golden = golden_fixture_hash(task.fixture);
    bool fresh = host::state_hash(initial) == golden;
    json initial_view = oracle_view(initial);

    agent::AgentConfig cfg;
    cfg.max_iterations = options.max_iterations;
    cfg.max_llm_calls = options.max_llm_calls;
    cfg.model_name = options.model_name;
    cfg.limits = options.limits;
    cfg.rollback_on_failure = true;
    cfg.auto_approve = true;
    cfg.verification = agent::VerificationMode::oracle;
    cfg.oracle = [&](const agent::Session& s) {
        auto bad = failing_clause(task, initial_view, oracle_view(s.state, transcript_of(s)));
        return agent::Verification{"", !bad, bad ? "oracle failed: " + *bad : "oracle passed"};
    };
    agent::Agent agent(cfg, provider, store);
    agent::Session session = agent.start(suite_name + "-" + task.id, task.instruction, initial, task.fixture);

    try {
        agent.run(session);
        bool declined = !session.iterations.empty() && session.iterations.back().response &&
                        !session.iterations.back().response->has_code();
        if (session.status == agent::SessionStatus::failed && declined) {
            res.verdict = TaskVerdict::not_possible;
        } else {
            res.verdict = verify_task(task, initial, session.state, transcript_of(session),
                                      session.status == agent::SessionStatus::awaiting_user);
        }
        res.detail = session.outcome;
    } catch (const OraclePathError& e) {
        res.verdict = TaskVerdict::error;
        res.detail = e.what();
    } catch (const Error& e) {
        res.verdict = TaskVerdict::error;
        res.detail = std::string(e.kind()) + ": " + e.what();
    }
    res.iterations = static_cast<int>(session.iterations.size());
    res.llm_calls = session.llm_calls;
    res.session_status = std::string(agent::to_string(session.status));

    host::HostState restored = store.rollback(session.pre_session_snapshot, session.id, &session.state);
    res.isolated = fresh && host::state_hash(restored) == golden;
    res.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace

BenchReport run_benchmark(const Suite& suite, std::shared_ptr<llm::Provider> provider, statekeeper::Store& store,
                          const BenchOptions& options) {
    if (!provider) throw ConfigError("benchmark needs a provider");
    BenchReport report;
    report.suite = suite.name;
    report.provider = provider->name();
    report.results.resize(suite.tasks.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < suite.tasks.size(); i = next++)
            report.results[i] = run_task(suite.tasks[i], suite.name, provider, store, options);
    };
    int n = std::clamp(options.parallelism, 1, static_cast<int>(std::max<std::size_t>(suite.tasks.size(), 1)));
    {
        std::vector<std::jthread> pool;
        for (int i = 1; i < n; ++i) pool.emplace_back(worker);
        worker();
    }
    return report;
}

}  // namespace jitagent::bench
