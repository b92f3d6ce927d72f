#include <pthread.h>

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "jitagent/agent/agent.hpp"
#include "jitagent/bench/bench.hpp"
#include "jitagent/common.hpp"
#include "jitagent/context/index.hpp"
#include "jitagent/service/service.hpp"

namespace {

using namespace jitagent;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfig = 2;

struct ProviderOpts {
    std::string name = "scripted";
    std::string script;
    std::string model;
    std::string endpoint;
    std::string api_key_env;
    std::string cassettes;
    bool record = false;
    bool replay = false;
};

void add_provider_opts(CLI::App* cmd, ProviderOpts& p) {
    cmd->add_option("--provider", p.name, "scripted, openai or anthropic")->capture_default_str();
    cmd->add_option("--script", p.script, "script table for the scripted provider");
    cmd->add_option("--model", p.model, "model name sent to the endpoint");
    cmd->add_option("--endpoint", p.endpoint, "scheme://host[:port] of the chat endpoint");
    cmd->add_option("--api-key-env", p.api_key_env, "environment variable holding the API key");
    cmd->add_option("--cassettes", p.cassettes, "cassette directory for --record/--replay");
    cmd->add_flag("--record", p.record, "record every model exchange into the cassette directory");
    cmd->add_flag("--replay", p.replay, "answer from the cassette directory only");
}

std::shared_ptr<llm::Provider> build_provider(const ProviderOpts& p, const std::string& default_cassettes = "") {
    if (p.record && p.replay) throw ConfigError("--record and --replay are exclusive");
    llm::ProviderConfig c;
    c.name = p.name;
    c.model = p.model;
    c.endpoint = p.endpoint;
    c.api_key_env = p.api_key_env;
    if (p.name == "scripted" && !p.replay)
        c.script_table = p.script.empty() ? std::filesystem::path(data_dir()) / "scripts" / "table2_oracle.json" : std::filesystem::path(p.script);
    else if (!p.script.empty())
        c.script_table = p.script;
    if (p.record || p.replay) {
        std::string dir = p.cassettes.empty() ? default_cassettes : p.cassettes;
        if (dir.empty()) throw ConfigError("--record/--replay need --cassettes DIR");
        c.cassette_dir = dir;
        c.cassette_mode = p.record ? llm::CassetteMode::record : llm::CassetteMode::replay;
    }
    return llm::make_provider(c);
}

safety::RuleSet load_rules_opt(const std::string& path) {
    return path.empty() ? safety::default_rules() : safety::load_rules_file(path);
}

agent::VerificationMode verification_mode(const std::string& v) {
    if (v == "llm") return agent::VerificationMode::llm;
    if (v == "none") return agent::VerificationMode::none;
    throw ConfigError("--verification must be llm or none");
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n') c = ' ';
    return s.size() > 160 ? s.substr(0, 157) + "..." : s;
}

void print_event(const std::string& kind, const json& p) {
    if (kind == "iteration_started") {
        std::cout << "round " << p.value("index", 0) << "\n";
    } else if (kind == "response_parsed") {
        if (p["response"].is_object()) {
            std::cout << "  thinking: " << one_line(p["response"].value("thinking", "")) << "\n";
            std::cout << "  code: " << one_line(p["response"].value("action_code", "")) << "\n";
        }
        if (p["parse_error"].is_string()) std::cout << "  unparsable reply: " << one_line(p["parse_error"].get<std::string>()) << "\n";
    } else if (kind == "verdict") {
        std::cout << "  safety: " << p["verdict"].value("decision", "") << "\n";
    } else if (kind == "execution_result") {
        if (p.contains("result")) {
            const json& r = p["result"];
            std::cout << "  result: " << r.value("status", "");
            if (r.contains("error") && r["error"].is_object()) std::cout << " (" << r["error"].value("kind", "") << ": " << one_line(r["error"].value("message", "")) << ")";
            std::cout << "\n";
            for (const auto& line : r.value("console", json::array())) std::cout << "  > " << line.get<std::string>() << "\n";
        }
        if (p.contains("verification"))
            std::cout << "  verification: " << (p["verification"].value("passed", false) ? "passed" : "failed") << "\n";
    } else if (kind == "status_changed") {
        std::cout << "status: " << p.value("status", "") << (p.value("outcome", "").empty() ? "" : " (" + p.value("outcome", "") + ")") << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Just-in-time code generating agent for a reference host application"};
    app.require_subcommand(1);
    std::string data = "jitagent-data";
    if (const char* home = std::getenv("JITAGENT_HOME")) data = home;
    app.add_option("--data-dir", data, "snapshots, audit log, live state and sessions")->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "start the agent service");
    service::ServiceConfig scfg;
    ProviderOpts serve_p;
    std::string serve_rules, serve_verify = "llm";
    serve->add_option("--host", scfg.host)->capture_default_str();
    serve->add_option("--port", scfg.port)->capture_default_str();
    serve->add_option("--fixture", scfg.fixture, "live host when the data directory has no saved state")->capture_default_str();
    serve->add_option("--rules", serve_rules, "safety rules file");
    serve->add_option("--max-iterations", scfg.agent.max_iterations)->capture_default_str();
    serve->add_option("--verification", serve_verify, "llm or none")->capture_default_str();
    serve->add_option("--ui-dir", scfg.ui_dir, "static files served under /ui");
    serve->add_flag("--allow-raw-exec", scfg.allow_raw_exec, "enable POST /execute");
    add_provider_opts(serve, serve_p);

    // run
    auto* run = app.add_subcommand("run", "run one instruction on an isolated fixture");
    std::string task, run_fixture = "default", run_verify = "llm", run_rules;
    int run_iters = 5;
    bool run_auto = false, run_json = false;
    ProviderOpts run_p;
    run->add_option("--task", task, "instruction")->required();
    run->add_option("--fixture", run_fixture)->capture_default_str();
    run->add_option("--max-iterations", run_iters)->capture_default_str();
    run->add_option("--verification", run_verify, "llm or none")->capture_default_str();
    run->add_option("--rules", run_rules, "safety rules file");
    run->add_flag("--auto-approve", run_auto, "grant every approval request");
    run->add_flag("--json", run_json, "print the session record as JSON");
    add_provider_opts(run, run_p);

    // bench
    auto* bench = app.add_subcommand("bench", "run a task suite and report completion");
    std::string suite = "table2", report_path;
    bench::BenchOptions bopts;
    ProviderOpts bench_p;
    bool bench_json = false;
    bench->add_option("--suite", suite, "suite name or file")->capture_default_str();
    bench->add_option("--parallel", bopts.parallelism)->capture_default_str();
    bench->add_option("--max-iterations", bopts.max_iterations)->capture_default_str();
    bench->add_option("--report", report_path, "write the JSON report here");
    bench->add_flag("--json", bench_json, "print the JSON report instead of the table");
    add_provider_opts(bench, bench_p);

    auto* rollback = app.add_subcommand("rollback", "restore a snapshot into the saved live state");
    std::int64_t snapshot = 0;
    rollback->add_option("--snapshot", snapshot)->required();

    auto* audit = app.add_subcommand("audit", "print the audit log");
    std::string audit_session;
    bool audit_json = false;
    audit->add_option("--session", audit_session);
    audit->add_flag("--json", audit_json);

    auto* gc = app.add_subcommand("gc", "delete old snapshots");
    std::size_t keep = 100;
    gc->add_option("--keep-last", keep)->capture_default_str();

    auto* fixture = app.add_subcommand("fixture", "list fixtures or print one");
    std::string fixture_name;
    fixture->add_option("name", fixture_name, "fixture to print; lists them when omitted");

    auto* dump = app.add_subcommand("dump", "print a built-in document");
    std::string what;
    dump->add_option("what", what, "surface, prompt, verification-prompt or rules")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*serve) {
            scfg.data_dir = data;
            scfg.rules = load_rules_opt(serve_rules);
            scfg.agent.verification = verification_mode(serve_verify);
            if (scfg.ui_dir.empty()) scfg.ui_dir = std::filesystem::path(data_dir()) / "ui";
            // Every thread inherits the blocked mask; one thread takes the signals.
            sigset_t sigs;
            sigemptyset(&sigs);
            sigaddset(&sigs, SIGINT);
            sigaddset(&sigs, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
            service::Service svc(scfg, build_provider(serve_p));
            int port = svc.start();
            std::jthread signals([&] {
                int sig = 0;
                sigwait(&sigs, &sig);
                svc.stop();
            });
            std::cout << "listening on http://" << scfg.host << ":" << port << std::endl;
            svc.wait();
            return kOk;
        }
        if (*run) {
            agent::AgentConfig cfg;
            cfg.max_iterations = run_iters;
            cfg.auto_approve = run_auto;
            cfg.verification = verification_mode(run_verify);
            statekeeper::Store store(data);
            agent::Agent agent(cfg, build_provider(run_p), store, load_rules_opt(run_rules));
            agent::Session s = agent.start("run-" + std::to_string(wall_clock_ms()), task, host::init_fixture(run_fixture), run_fixture);
            if (!run_json) s.on_event = print_event;
            try {
                agent.run(s);
            } catch (const Error& e) {
                if (!run_json) std::cerr << e.kind() << ": " << e.what() << "\n";
            }
            json record = agent::to_json(s);
            record["state"] = host::to_json(s.state);
            store.save_session(s.id, record);
            if (run_json) std::cout << record.dump(2) << "\n";
            else std::cout << "session " << s.id << " " << agent::to_string(s.status) << "\n";
            return s.status == agent::SessionStatus::succeeded ? kOk : kFailure;
        }
        if (*bench) {
            bench::Suite st = bench::load_suite(bench::suite_path(suite));
            auto provider = build_provider(bench_p);
            std::filesystem::path work = std::filesystem::path(data) / "bench";
            statekeeper::Store store(work);
            bench::BenchReport report = bench::run_benchmark(st, provider, store, bopts);
            if (!report_path.empty()) write_file_atomic(report_path, report.to_json().dump(2) + "\n");
            if (bench_json) std::cout << report.to_json().dump(2) << "\n";
            else std::cout << report.render_table();
            return report.passed() == static_cast<int>(report.results.size()) ? kOk : kFailure;
        }
        if (*rollback) {
            statekeeper::Store store(data);
            auto current = store.load_state();
            host::HostState restored = store.rollback(snapshot, "cli", current ? &*current : nullptr);
            store.save_state(restored);
            std::cout << "restored snapshot " << snapshot << " (" << host::state_hash(restored) << ")\n";
            return kOk;
        }
        if (*audit) {
            statekeeper::Store store(data);
            statekeeper::AuditFilter f;
            if (!audit_session.empty()) f.session_id = audit_session;
            for (const auto& e : store.query_audit(f)) {
                if (audit_json) {
                    std::cout << statekeeper::to_json(e).dump() << "\n";
                } else {
                    std::cout << e.seq << "  " << iso8601(e.timestamp) << "  " << e.session_id << "#" << e.iteration_index << "  "
                              << e.verdict_decision << "  " << e.result_status << "  snap " << e.snapshot_id << "  "
                              << e.state_diff.entries.size() << " change(s)  " << e.tag << "\n";
                }
            }
            return kOk;
        }
        if (*gc) {
            statekeeper::Store store(data);
            std::cout << "removed " << store.gc(keep) << " snapshot(s)\n";
            return kOk;
        }
        if (*fixture) {
            if (fixture_name.empty()) {
                for (const auto& n : host::fixture_names()) std::cout << n << "\n";
            } else {
                std::cout << host::serialize(host::init_fixture(fixture_name));
            }
            return kOk;
        }
        if (*dump) {
            if (what == "surface") std::cout << context::surface_docs_json().dump(2) << "\n";
            else if (what == "prompt") std::cout << agent::prompt_template();
            else if (what == "verification-prompt") std::cout << agent::verification_template();
            else if (what == "rules") std::cout << safety::dump_rules(safety::default_rules());
            else throw ConfigError("unknown document '" + what + "'");
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const SuiteSyntaxError& e) {
        std::cerr << "suite error: " << e.what() << "\n";
        return kConfig;
    } catch (const RuleSyntaxError& e) {
        std::cerr << "rules error: " << e.what() << "\n";
        return kConfig;
    } catch (const UnknownFixture& e) {
        std::cerr << e.what() << "\n";
        return kConfig;
    } catch (const Error& e) {
        std::cerr << e.kind() << ": " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
