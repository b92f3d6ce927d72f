#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace jitagent::context {

enum class SymbolKind { bridge_entry, type, route, example };
std::string_view to_string(SymbolKind k);
SymbolKind symbol_kind_from_string(std::string_view s);

struct SymbolDoc {
    std::string path;
    SymbolKind kind = SymbolKind::bridge_entry;
    std::string doc;
    std::vector<std::string> edges;

    bool operator==(const SymbolDoc&) const = default;
};

struct IndexedSymbol {
    std::string path;
    SymbolKind kind = SymbolKind::bridge_entry;
    std::string doc;
    std::vector<std::string> tokens;  // sorted, unique
    std::vector<std::string> edges;
};

struct Snippet {
    std::string path;
    SymbolKind kind = SymbolKind::bridge_entry;
    std::string text;  // at most kMaxSnippetLines lines
    int score = 0;
    bool via_edge = false;
};

inline constexpr int kDefaultK = 6;
inline constexpr int kMaxSnippetLines = 40;

// Lowercases, splits identifiers on case and underscore boundaries, drops
// stop words and folds simple plurals. Order-preserving, may repeat.
std::vector<std::string> tokenize(std::string_view text);

class Index {
public:
    Index() = default;
    // Throws DuplicatePath, or DomainError for an edge to an unknown path.
    explicit Index(std::vector<SymbolDoc> docs);

    // Top-k by keyword overlap (ties by path), then one hop along edges. With
    // no overlap at all, the k symbols with the most edges.
    std::vector<Snippet> retrieve(std::string_view query, int k = kDefaultK) const;

    const std::vector<IndexedSymbol>& symbols() const { return symbols_; }
    const IndexedSymbol* find(std::string_view path) const;
    std::size_t size() const { return symbols_.size(); }

private:
    std::vector<IndexedSymbol> symbols_;  // sorted by path
    std::vector<int> degree_;
};

// Documentation for the reference host: bridge entries, value types, routes
// and short usage examples.
std::vector<SymbolDoc> surface_docs();
nlohmann::json surface_docs_json();
const Index& surface_index();

}  // namespace jitagent::context
