#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/host/state.hpp"

namespace jitagent::bench {

// Success predicates over the state a task started from, the state it ended
// in and the console lines it printed.
//
//   expr    := or
//   or      := and ("or" and)*
//   and     := unary ("and" unary)*
//   unary   := "not" unary | compare
//   compare := sum [("==" | "!=" | "<" | "<=" | ">" | ">=" | "contains") sum]
//   sum     := product (("+" | "-") product)*
//   product := atom (("*" | "/" | "%") atom)*
//   atom    := number | string | true | false | null | "(" expr ")"
//            | name "(" args ")" | path
//   path    := ["initial." | "final."] segment ("." segment | "[" int "]")*
//
// Paths read the canonical state JSON plus three extra roots: `route` (the
// current route), `active` (the active tab's document) and `console` (the
// printed lines; always empty for `initial`). Functions: len, delta, slice,
// lower, last.
class Predicate {
public:
    // Throws ParseError on malformed text.
    static Predicate parse(std::string_view text);

    // Throws OraclePathError when a path does not resolve, DomainError on a
    // type mismatch.
    bool evaluate(const nlohmann::json& initial_view, const nlohmann::json& final_view) const;
    // Every path the predicate reads, as written (prefix included).
    std::vector<std::string> paths() const;
    // Resolves every path without evaluating; throws OraclePathError.
    void check_paths(const nlohmann::json& initial_view, const nlohmann::json& final_view) const;
    const std::string& source() const { return source_; }

    struct Node;

private:
    std::string source_;
    std::shared_ptr<const Node> root_;
};

nlohmann::json oracle_view(const host::HostState& state, const std::vector<std::string>& console = {});

}  // namespace jitagent::bench
