#include "jitagent/context/index.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "jitagent/common.hpp"
#include "jitagent/host/bridge.hpp"

namespace jitagent::context {

using nlohmann::json;

std::string_view to_string(SymbolKind k) {
    switch (k) {
        case SymbolKind::bridge_entry: return "bridge-entry";
        case SymbolKind::type: return "type";
        case SymbolKind::route: return "route";
        case SymbolKind::example: return "example";
    }
    return "bridge-entry";
}

SymbolKind symbol_kind_from_string(std::string_view s) {
    for (SymbolKind k : {SymbolKind::bridge_entry, SymbolKind::type, SymbolKind::route, SymbolKind::example})
        if (to_string(k) == s) return k;
    throw ParseError("unknown symbol kind '" + std::string(s) + "'");
}

namespace {

const std::set<std::string, std::less<>>& stop_words() {
    static const std::set<std::string, std::less<>> words = {
        "a",    "an",   "the",  "and",   "or",    "of",   "to",   "in",   "on",    "for",  "with", "by",   "my",
        "me",   "i",    "is",   "are",   "be",    "it",   "its",  "this", "that",  "these", "those", "as",  "at",
        "from", "all",  "any",  "please", "can",  "you",  "your", "into", "then",  "than", "so",   "do",   "does",
        "some", "one",  "app",  "s",     "was",   "were", "has",  "have", "will",  "would", "should", "there", "their",
        "not",  "no",   "if",   "else",  "once",  "only", "each", "which", "what", "when", "how",  "we",   "our"};
    return words;
}

std::string fold_plural(std::string w) {
    if (w.size() > 4 && w.ends_with("ies")) return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 3 && w.back() == 's' && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is")) w.pop_back();
    return w;
}

// Splits "closeOtherTabs" / "font_size" / "HTMLParser" into words.
void split_identifier(std::string_view word, std::vector<std::string>& out) {
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
    };
    for (std::size_t i = 0; i < word.size(); ++i) {
        char c = word[i];
        bool upper = std::isupper(static_cast<unsigned char>(c)) != 0;
        if (upper && !cur.empty()) {
            bool prev_lower = std::islower(static_cast<unsigned char>(word[i - 1])) != 0 || std::isdigit(static_cast<unsigned char>(word[i - 1])) != 0;
            bool next_lower = i + 1 < word.size() && std::islower(static_cast<unsigned char>(word[i + 1])) != 0;
            if (prev_lower || next_lower) flush();
        }
        cur += c;
    }
    flush();
}

std::string render(const IndexedSymbol& s) {
    std::string text = s.path + " [" + std::string(to_string(s.kind)) + "]\n" + s.doc;
    std::istringstream in(text);
    std::string line, out;
    int n = 0;
    while (std::getline(in, line) && n < kMaxSnippetLines) {
        out += line + "\n";
        ++n;
    }
    return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) split_identifier(cur, words);
        cur.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) != 0) cur += c;
        else flush();  // '_' and punctuation separate words too
    }
    flush();
    std::vector<std::string> out;
    for (std::string& w : words) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (stop_words().count(w) > 0) continue;
        w = fold_plural(std::move(w));
        if (stop_words().count(w) > 0) continue;
        out.push_back(std::move(w));
    }
    return out;
}

Index::Index(std::vector<SymbolDoc> docs) {
    std::sort(docs.begin(), docs.end(), [](const SymbolDoc& a, const SymbolDoc& b) { return a.path < b.path; });
    for (std::size_t i = 1; i < docs.size(); ++i)
        if (docs[i].path == docs[i - 1].path) throw DuplicatePath("duplicate symbol path '" + docs[i].path + "'");
    std::map<std::string, int, std::less<>> in_degree;
    for (SymbolDoc& d : docs) {
        IndexedSymbol s{d.path, d.kind, d.doc, tokenize(d.path + " " + d.doc), d.edges};
        std::sort(s.tokens.begin(), s.tokens.end());
        s.tokens.erase(std::unique(s.tokens.begin(), s.tokens.end()), s.tokens.end());
        symbols_.push_back(std::move(s));
    }
    for (const IndexedSymbol& s : symbols_) {
        for (const std::string& e : s.edges) {
            if (!find(e)) throw DomainError("symbol '" + s.path + "' has an edge to unknown path '" + e + "'");
            ++in_degree[e];
        }
    }
    for (const IndexedSymbol& s : symbols_) degree_.push_back(static_cast<int>(s.edges.size()) + in_degree[s.path]);
}

const IndexedSymbol* Index::find(std::string_view path) const {
    auto it = std::lower_bound(symbols_.begin(), symbols_.end(), path,
                               [](const IndexedSymbol& s, std::string_view p) { return s.path < p; });
    return it != symbols_.end() && it->path == path ? &*it : nullptr;
}

std::vector<Snippet> Index::retrieve(std::string_view query, int k) const {
    if (k < 1) throw DomainError("k must be at least 1");
    std::vector<std::string> q = tokenize(query);
    std::sort(q.begin(), q.end());
    q.erase(std::unique(q.begin(), q.end()), q.end());

    struct Ranked {
        std::size_t i;
        int score;
    };
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        const auto& t = symbols_[i].tokens;
        int score = static_cast<int>(std::count_if(q.begin(), q.end(), [&](const std::string& w) {
            return std::binary_search(t.begin(), t.end(), w);
        }));
        if (score > 0) ranked.push_back({i, score});
    }
    std::vector<Snippet> out;
    const auto kk = static_cast<std::size_t>(k);
    if (ranked.empty()) {
        std::vector<std::size_t> order(symbols_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return degree_[a] > degree_[b]; });
        for (std::size_t j = 0; j < order.size() && j < kk; ++j)
            out.push_back({symbols_[order[j]].path, symbols_[order[j]].kind, render(symbols_[order[j]]), 0, false});
        return out;
    }
    // symbols_ is path-sorted, so a stable sort on score keeps the path tie-break
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
    if (ranked.size() > kk) ranked.resize(kk);
    std::set<std::string, std::less<>> seen;
    for (const Ranked& r : ranked) {
        out.push_back({symbols_[r.i].path, symbols_[r.i].kind, render(symbols_[r.i]), r.score, false});
        seen.insert(symbols_[r.i].path);
    }
    const std::size_t top = out.size();
    for (std::size_t j = 0; j < top && out.size() < 2 * kk; ++j) {
        const IndexedSymbol* s = find(out[j].path);
        for (const std::string& e : s->edges) {
            if (out.size() >= 2 * kk) break;
            if (!seen.insert(e).second) continue;
            const IndexedSymbol* t = find(e);
            out.push_back({t->path, t->kind, render(*t), 0, true});
        }
    }
    return out;
}

std::vector<SymbolDoc> surface_docs() {
    std::vector<SymbolDoc> docs;
    for (const host::SurfaceEntry& e : host::bridge_surface()) {
        std::string doc = std::string(host::to_string(e.kind)) + ": " + e.signature + "\n" + e.doc;
        if (e.returns_promise) doc += "\nReturns a promise; chain follow-up work with .then().";
        docs.push_back({e.path, SymbolKind::bridge_entry, doc, e.edges});
    }
    auto route = [&](const std::string& r, const std::string& doc, std::vector<std::string> edges) {
        docs.push_back({"route:" + r, SymbolKind::route, doc, std::move(edges)});
    };
    route("home", "Start page. Has navigation tabs Home, Library, Search and Editor.", {"app.ui.navigate"});
    route("library",
          "Music library page. Has the tabs Playlists, Albums, Artists, Liked Songs, Cloud Disk and Play History; clicking "
          "Liked Songs or Play History opens the matching sub-page.",
          {"app.ui.navigate", "app.ui.find", "route:library/favorites", "route:library/history"});
    route("library/favorites", "Liked Songs page listing the user's favorite songs.", {"app.library.favorites", "app.ui.navigate"});
    route("library/history", "Play History page listing recently played songs, most recent first.",
          {"app.library.history", "app.ui.navigate"});
    route("editor", "Markdown editor page with one tab per open document.", {"app.editor.tabs", "app.ui.navigate"});
    route("search", "Search results page, route search?q=<text>; opened by app.library.search(text).", {"app.library.search"});

    docs.push_back({"type:Track", SymbolKind::type, "Song record {id, title, artist, duration} where duration is in seconds.",
                    {"app.player.currentTrack", "app.player.queue"}});
    docs.push_back({"type:UiNode", SymbolKind::type,
                    "Page element returned by app.ui.find: {id, kind, label, route}. Call element.click() to click it.",
                    {"app.ui.find", "app.ui.click"}});
    docs.push_back({"type:EditorTab", SymbolKind::type, "Editor tab record {id, documentId, title, active}.", {"app.editor.tabs"}});

    docs.push_back({"example:adjust-volume", SymbolKind::example,
                    "Read a property, compute, write it back:\n"
                    "const v = app.player.volume;\n"
                    "app.player.volume = Math.min(1, v + 0.1);\n"
                    "console.log('volume now', app.player.volume);",
                    {"app.player.volume"}});
    docs.push_back({"example:open-page-and-click", SymbolKind::example,
                    "Open a page, then click an element found by its label:\n"
                    "app.ui.navigate('library').then(() => {\n"
                    "  const hits = app.ui.find('Albums');\n"
                    "  if (hits.length > 0) hits[0].click();\n"
                    "  else console.error('no such element');\n"
                    "});",
                    {"app.ui.navigate", "app.ui.find", "type:UiNode"}});
    docs.push_back({"example:edit-paragraphs", SymbolKind::example,
                    "Paragraph edits go through a copy that is assigned back:\n"
                    "const ps = app.editor.activeDocument.paragraphs;\n"
                    "ps[0] = ps[0].toUpperCase();\n"
                    "app.editor.activeDocument.paragraphs = ps;",
                    {"app.editor.activeDocument.paragraphs"}});
    return docs;
}

json surface_docs_json() {
    json arr = json::array();
    for (const SymbolDoc& d : surface_docs())
        arr.push_back({{"path", d.path}, {"kind", to_string(d.kind)}, {"doc", d.doc}, {"edges", d.edges}});
    return {{"format_version", 1}, {"root", host::kRootName}, {"symbols", arr}};
}

const Index& surface_index() {
    static const Index index(surface_docs());
    return index;
}

}  // namespace jitagent::context
