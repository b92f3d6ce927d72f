#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/agent/agent.hpp"
#include "jitagent/bench/oracle.hpp"
#include "jitagent/host/state.hpp"
#include "jitagent/llm/provider.hpp"
#include "jitagent/statekeeper/store.hpp"

namespace jitagent::bench {

// Suite files hold one block per task:
//
//   task <id>
//     app: <label shown in the report>
//     instruction: <text, verbatim to end of line>
//     fixture: <fixture name>
//     multi_step: true|false
//     oracle: <predicate>        (repeatable; all must hold)
//   end
//
// Blank lines and lines starting with '#' are ignored outside and inside
// blocks.
struct TaskSpec {
    std::string id;
    std::string app;
    std::string instruction;
    std::string fixture = "default";
    std::vector<std::string> oracle;
    bool expects_multi_step = false;

    bool operator==(const TaskSpec&) const = default;
};

struct Suite {
    std::string name;
    std::vector<TaskSpec> tasks;
};

// Throws SuiteSyntaxError with the offending line, including for oracle
// paths that the task's fixture does not define.
Suite parse_suite(std::string_view text, std::string name = "suite");
Suite load_suite(const std::filesystem::path& path);
std::string dump_suite(const Suite& suite);
// Resolves "table2" to the shipped suite; anything else is a file path.
std::filesystem::path suite_path(const std::string& name_or_path);

enum class TaskVerdict { pass, fail, salient_fail, not_possible, error };
std::string_view to_string(TaskVerdict v);

// SHA-256 of the fixture as shipped in the data directory.
std::string golden_fixture_hash(const std::string& fixture);

// Pure oracle evaluation. `claimed_done` is true when the session's last
// round ran cleanly with final_step set; a false oracle then counts as a
// salient failure unless the script itself printed an [error] line.
// Throws OraclePathError.
TaskVerdict verify_task(const TaskSpec& task, const host::HostState& initial, const host::HostState& final_state,
                        const std::vector<std::string>& transcript, bool claimed_done);
TaskVerdict verify_task(const TaskSpec& task, const host::HostState& final_state,
                        const std::vector<std::string>& transcript, bool claimed_done);

struct TaskResult {
    std::string task_id;
    std::string app;
    std::string instruction;
    TaskVerdict verdict = TaskVerdict::error;
    int iterations = 0;
    int llm_calls = 0;
    double duration_ms = 0;
    std::string session_status;
    std::string detail;
    bool isolated = false;  // fixture matched its golden hash and rollback restored it
};

struct BenchReport {
    std::string suite;
    std::string provider;
    std::vector<TaskResult> results;

    int passed() const;
    std::string rate() const;  // "n/N"
    // Durations are left out when `with_durations` is false, which makes two
    // runs with a scripted provider compare equal.
    nlohmann::json to_json(bool with_durations = true) const;
    // Table layout: one row per task, one column for the provider.
    std::string render_table() const;
};

struct BenchOptions {
    int parallelism = 1;
    int max_iterations = 5;
    int max_llm_calls = 10;
    std::string model_name;
    sandbox::ResourceLimits limits;
};

// Runs every task on a fresh fixture with rollback_on_failure and automatic
// approval; oracle predicates decide the verdicts. Provider errors become
// error verdicts.
BenchReport run_benchmark(const Suite& suite, std::shared_ptr<llm::Provider> provider, statekeeper::Store& store,
                          const BenchOptions& options = {});

}  // namespace jitagent::bench
