#include "jitagent/agent/prompt.hpp"

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"

namespace jitagent::agent {

namespace {

// Keep in sync with data/prompt_template.txt (checked by a unit test).
constexpr std::string_view kPromptTemplate = R"({app_desc}

You are connected to this application through its agent service. The service takes a JavaScript snippet, runs it immediately inside the running application and reports back what happened. Scripts reach the application only through a single global object called `{root}`. There is no DOM, network, timer, clock or module system, and `{root}` is the only way in. Text printed with console.log comes back to you.

Parts of the `{root}` API that look relevant to this request:
<CONTEXT>
{context}
</CONTEXT>

Work in rounds. Each round you send one script; the service runs it and returns its status, any error message and the printed lines. Judge whether the script you are about to send finishes the request. If more rounds will be needed, plan them first and send only the next piece. Read the earlier rounds below before writing anything, paying particular attention to error messages. Treat application state with care and change only what the request calls for.

<FORMAT>
Answer with one JSON object and nothing else:
{"thinking": "<purpose of this round, and what earlier rounds taught you>", "action_code": "js:<script>", "final_step": <true or false>}
final_step is true when this script should complete the request.
When the request cannot be carried out, answer {"thinking": "<why>", "action_code": "N/A:<reasons>", "final_step": true}.
</FORMAT>

Earlier rounds for this request, oldest first; each shows your answer and the service report:
<HISTORY>
{history}
</HISTORY>

Write the script for this request: "{task}"
)";

constexpr std::string_view kVerificationTemplate = R"({app_desc}

A script has just been run inside this application to carry out a user request. Check whether the request really was accomplished by reading application state through the global object `{root}`. The checking script must only read: assignments and state-changing calls are blocked. It must print exactly one line, VERIFY:PASS when the request was accomplished and VERIFY:FAIL otherwise.

Parts of the `{root}` API that look relevant:
<CONTEXT>
{context}
</CONTEXT>

Script that was run:
<ACTION>
{action}
</ACTION>

Lines it printed:
<OUTPUT>
{output}
</OUTPUT>

State changes it made (path: before -> after):
<CHANGES>
{changes}
</CHANGES>

Answer with one JSON object: {"thinking": "<how you will check>", "action_code": "js:<checking script>", "final_step": true}

Request that was carried out: "{task}"
)";

constexpr std::string_view kAppDescription =
    "The application is a desktop program that combines a music player and a markdown editor. The player has a play "
    "queue, a volume control, a music library with favorite (liked) songs and a listening history, and song search. "
    "The editor shows open documents in tabs; each document is a list of paragraphs with a font size.";

// Single pass over the template, so substituted text is never rescanned.
std::string fill(std::string_view tmpl, std::initializer_list<std::pair<std::string_view, std::string>> values) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size();) {
        bool hit = false;
        if (tmpl[i] == '{') {
            for (const auto& [key, value] : values) {
                if (tmpl.substr(i, key.size()) == key) {
                    out += value;
                    i += key.size();
                    hit = true;
                    break;
                }
            }
        }
        if (!hit) out += tmpl[i++];
    }
    return out;
}

std::string status_line(const IterationRecord& r) {
    if (r.parse_error) return "parse_error";
    if (r.response && !r.response->has_code()) return "not_possible";
    if (r.result) return std::string(sandbox::to_string(r.result->status));
    if (r.verdict && r.verdict->decision == safety::Decision::Deny) return "denied (not run)";
    if (r.approval && !*r.approval) return "declined by operator (not run)";
    if (r.verdict && r.verdict->decision == safety::Decision::NeedsApproval) return "awaiting approval (not run)";
    return "not run";
}

}  // namespace

std::string_view prompt_template() { return kPromptTemplate; }
std::string_view verification_template() { return kVerificationTemplate; }
std::string_view app_description() { return kAppDescription; }

std::string render_context(const std::vector<context::Snippet>& snippets) {
    std::string out;
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        if (i > 0) out += "\n";
        out += snippets[i].text;
    }
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

std::string render_round(const IterationRecord& r) {
    std::string out = "Round " + std::to_string(r.index) + "\nYour answer:\n";
    out += r.response ? r.response->serialize() : r.raw_response;
    out += "\nService report:\nstatus: " + status_line(r) + "\n";
    if (r.parse_error)
        out += "error: ParseError: " + *r.parse_error + ". Answer with exactly one JSON object in the required format.\n";
    if (r.verdict && r.verdict->decision != safety::Decision::Allow) {
        for (const auto& reason : r.verdict->reasons)
            out += "safety: " + reason.reason + " (line " + std::to_string(reason.line) + ")\n";
    }
    if (r.approval) out += std::string("operator: ") + (*r.approval ? "approved the script" : "declined to approve the script") + "\n";
    if (r.result) {
        if (r.result->error) out += "error: " + r.result->error->display() + "\n";
        if (r.result->return_value && !r.result->return_value->is_null())
            out += "return value: " + r.result->return_value->dump() + "\n";
        if (!r.result->console.empty()) {
            out += "console:\n";
            for (const auto& line : r.result->console) out += "  " + line + "\n";
        }
    }
    if (r.verification) {
        out += std::string("verification: ") + (r.verification->passed ? "PASS" : "FAIL");
        if (!r.verification->detail.empty()) out += " (" + r.verification->detail + ")";
        out += "\n";
    }
    for (const auto& f : r.feedback) out += "user: " + f + "\n";
    return out;
}

std::string summarize_round(const IterationRecord& r) {
    std::string kind;
    if (r.parse_error) kind = "ParseError";
    else if (r.result && r.result->error) kind = std::string(sandbox::to_string(r.result->error->kind));
    else if (r.verdict && r.verdict->decision == safety::Decision::Deny) kind = "Denied";
    else if (r.verification && !r.verification->passed) kind = "VerificationFailed";
    std::string out = "Round " + std::to_string(r.index) + " (summarized): status " + status_line(r);
    if (!kind.empty()) out += ", error kind " + kind;
    return out + "\n";
}

std::string render_history(const std::vector<IterationRecord>& rounds, std::size_t budget) {
    std::vector<std::string> parts;
    std::size_t total = 0;
    for (const auto& r : rounds) {
        parts.push_back(render_round(r));
        total += parts.back().size();
    }
    for (std::size_t i = 0; i + 1 < rounds.size() && total > budget; ++i) {
        std::string s = summarize_round(rounds[i]);
        total = total - parts[i].size() + s.size();
        parts[i] = std::move(s);
    }
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i > 0 && parts[i - 1].find("(summarized)") == std::string::npos ? "\n" : "") + parts[i];
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

std::string build_prompt(const Session& session, const std::vector<context::Snippet>& snippets, const PromptOptions& options) {
    return fill(kPromptTemplate, {{"{app_desc}", std::string(kAppDescription)},
                                  {"{root}", std::string(host::kRootName)},
                                  {"{context}", render_context(snippets)},
                                  {"{history}", render_history(session.iterations, options.history_budget)},
                                  {"{task}", session.instruction}});
}

std::string build_verification_prompt(const Session& session, const IterationRecord& round,
                                      const std::vector<context::Snippet>& snippets) {
    std::string output, changes;
    if (round.result) {
        for (const auto& line : round.result->console) output += line + "\n";
        for (const auto& e : round.result->state_diff.entries) {
            if (e.path == "logical_clock") continue;
            changes += e.path + ": " + (e.before ? e.before->dump() : "(none)") + " -> " + (e.after ? e.after->dump() : "(removed)") + "\n";
        }
    }
    return fill(kVerificationTemplate, {{"{app_desc}", std::string(kAppDescription)},
                                        {"{root}", std::string(host::kRootName)},
                                        {"{context}", render_context(snippets)},
                                        {"{action}", round.response && round.response->has_code() ? round.response->code().source : ""},
                                        {"{output}", output},
                                        {"{changes}", changes},
                                        {"{task}", session.instruction}});
}

}  // namespace jitagent::agent
