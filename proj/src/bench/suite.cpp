#include <cctype>
#include <set>
#include <sstream>

#include "jitagent/bench/bench.hpp"
#include "jitagent/common.hpp"

namespace jitagent::bench {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool valid_id(const std::string& id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '_';
    });
}

struct Pending {
    TaskSpec spec;
    int line = 0;
    std::set<std::string> seen;
    std::vector<std::pair<int, std::string>> oracle_lines;
};

void finish(Pending& p, std::vector<TaskSpec>& out, std::set<std::string>& ids) {
    if (p.spec.instruction.empty()) throw SuiteSyntaxError(p.line, "task '" + p.spec.id + "' has no instruction");
    if (p.oracle_lines.empty()) throw SuiteSyntaxError(p.line, "task '" + p.spec.id + "' has no oracle");
    host::HostState fixture;
    try {
        fixture = host::init_fixture(p.spec.fixture);
    } catch (const UnknownFixture& e) {
        throw SuiteSyntaxError(p.line, e.what());
    }
    nlohmann::json view = oracle_view(fixture);
    for (const auto& [line, text] : p.oracle_lines) {
        try {
            Predicate::parse(text).check_paths(view, view);
        } catch (const ParseError& e) {
            throw SuiteSyntaxError(line, std::string("bad oracle: ") + e.what());
        } catch (const OraclePathError& e) {
            throw SuiteSyntaxError(line, std::string("oracle reads an undefined path: ") + e.what());
        }
        p.spec.oracle.push_back(text);
    }
    if (!ids.insert(p.spec.id).second) throw SuiteSyntaxError(p.line, "duplicate task id '" + p.spec.id + "'");
    out.push_back(std::move(p.spec));
}

}  // namespace

Suite parse_suite(std::string_view text, std::string name) {
    Suite suite;
    suite.name = std::move(name);
    std::set<std::string> ids;
    std::optional<Pending> open;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string t = trim(raw);
        if (t.empty() || t[0] == '#') continue;
        if (!open) {
            if (t.rfind("task ", 0) != 0) throw SuiteSyntaxError(line, "expected 'task <id>'");
            std::string id = trim(t.substr(5));
            if (!valid_id(id)) throw SuiteSyntaxError(line, "invalid task id '" + id + "'");
            open.emplace();
            open->spec.id = id;
            open->line = line;
            continue;
        }
        if (t == "end") {
            finish(*open, suite.tasks, ids);
            open.reset();
            continue;
        }
        auto colon = t.find(':');
        if (colon == std::string::npos) throw SuiteSyntaxError(line, "expected 'key: value' or 'end'");
        std::string key = trim(t.substr(0, colon));
        std::string value = trim(t.substr(colon + 1));
        if (key != "oracle" && !open->seen.insert(key).second) throw SuiteSyntaxError(line, "duplicate field '" + key + "'");
        if (value.empty()) throw SuiteSyntaxError(line, "field '" + key + "' is empty");
        if (key == "app") {
            open->spec.app = value;
        } else if (key == "instruction") {
            open->spec.instruction = value;
        } else if (key == "fixture") {
            open->spec.fixture = value;
        } else if (key == "multi_step") {
            if (value != "true" && value != "false") throw SuiteSyntaxError(line, "multi_step must be true or false");
            open->spec.expects_multi_step = value == "true";
        } else if (key == "oracle") {
            open->oracle_lines.emplace_back(line, value);
        } else {
            throw SuiteSyntaxError(line, "unknown field '" + key + "'");
        }
    }
    if (open) throw SuiteSyntaxError(line, "task '" + open->spec.id + "' is missing 'end'");
    if (suite.tasks.empty()) throw SuiteSyntaxError(line, "suite has no tasks");
    return suite;
}

Suite load_suite(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path.string());
    } catch (const Error& e) {
        throw ConfigError("cannot read suite '" + path.string() + "': " + e.what());
    }
    return parse_suite(text, path.stem().string());
}

std::string dump_suite(const Suite& suite) {
    std::string out;
    for (const TaskSpec& t : suite.tasks) {
        if (!out.empty()) out += "\n";
        out += "task " + t.id + "\n";
        if (!t.app.empty()) out += "  app: " + t.app + "\n";
        out += "  instruction: " + t.instruction + "\n";
        out += "  fixture: " + t.fixture + "\n";
        out += std::string("  multi_step: ") + (t.expects_multi_step ? "true" : "false") + "\n";
        for (const std::string& o : t.oracle) out += "  oracle: " + o + "\n";
        out += "end\n";
    }
    return out;
}

std::filesystem::path suite_path(const std::string& name_or_path) {
    if (name_or_path.find('/') == std::string::npos && name_or_path.find('.') == std::string::npos)
        return std::filesystem::path(data_dir()) / "suites" / (name_or_path + ".spec");
    return name_or_path;
}

}  // namespace jitagent::bench
