#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "jitagent/agent/session.hpp"
#include "jitagent/context/index.hpp"

namespace jitagent::agent {

// Placeholders: {app_desc} {root} {context} {history} {task}.
std::string_view prompt_template();
std::string_view verification_template();
std::string_view app_description();

struct PromptOptions {
    // Character budget for the HISTORY block. Older rounds are reduced to
    // one-line summaries until the block fits; the newest round stays verbatim.
    std::size_t history_budget = 24000;
};

std::string render_context(const std::vector<context::Snippet>& snippets);
std::string render_round(const IterationRecord& r);
std::string summarize_round(const IterationRecord& r);
std::string render_history(const std::vector<IterationRecord>& rounds, std::size_t budget);

std::string build_prompt(const Session& session, const std::vector<context::Snippet>& snippets, const PromptOptions& options = {});
std::string build_verification_prompt(const Session& session, const IterationRecord& round,
                                      const std::vector<context::Snippet>& snippets);

}  // namespace jitagent::agent
