#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "jitagent/common.hpp"
#include "jitagent/context/index.hpp"
#include "jitagent/host/bridge.hpp"

using namespace jitagent;
using namespace jitagent::context;

namespace {

std::vector<std::string> paths(const std::vector<Snippet>& s) {
    std::vector<std::string> out;
    for (const auto& x : s) out.push_back(x.path);
    return out;
}

}  // namespace

TEST_CASE("tokenizer") {
    CHECK(tokenize("closeOtherTabs") == std::vector<std::string>{"close", "other", "tab"});
    CHECK(tokenize("font_size") == std::vector<std::string>{"font", "size"});
    CHECK(tokenize("HTMLParser v2") == std::vector<std::string>{"html", "parser", "v2"});
    CHECK(tokenize("Show my favorite songs") == std::vector<std::string>{"show", "favorite", "song"});
    CHECK(tokenize("app.library.favorites()") == std::vector<std::string>{"library", "favorite"});
    CHECK(tokenize("the history of all queries") == std::vector<std::string>{"history", "query"});
    CHECK(tokenize("").empty());
}

TEST_CASE("surface index mirrors the bridge surface") {
    const Index& idx = surface_index();
    std::size_t bridge = 0;
    for (const auto& s : idx.symbols()) bridge += s.kind == SymbolKind::bridge_entry ? 1 : 0;
    CHECK(bridge == host::bridge_surface().size());
    for (const auto& e : host::bridge_surface()) CHECK(idx.find(e.path) != nullptr);
    for (const auto& s : idx.symbols())
        for (const auto& e : s.edges) CHECK(idx.find(e) != nullptr);
}

TEST_CASE("shipped symbol file is in sync with the surface definition") {
    std::string shipped = read_file(std::string(JITAGENT_DATA_DIR) + "/bridge_surface.json");
    CHECK(shipped == surface_docs_json().dump(2) + "\n");
}

TEST_CASE("build errors and the empty index") {
    CHECK_THROWS_AS(Index({{"a", SymbolKind::type, "x", {}}, {"a", SymbolKind::type, "y", {}}}), DuplicatePath);
    CHECK_THROWS_AS(Index({{"a", SymbolKind::type, "x", {"b"}}}), DomainError);
    Index empty;
    CHECK(empty.retrieve("anything").empty());
    CHECK_THROWS_AS(empty.retrieve("x", 0), DomainError);
}

TEST_CASE("retrieval examples") {
    const Index& idx = surface_index();
    auto vol = idx.retrieve("Increase the volume slightly");
    REQUIRE_FALSE(vol.empty());
    CHECK(vol[0].path == "app.player.volume");

    auto close = paths(idx.retrieve("Close all other tabs"));
    auto top = idx.retrieve("Close all other tabs");
    CHECK(top[0].path == "app.editor.closeOtherTabs");
    CHECK(std::find(close.begin(), close.end(), "app.editor.tabs") != close.end());

    auto fav = paths(idx.retrieve("Show my favorite songs"));
    CHECK(std::find(fav.begin(), fav.end(), "app.library.favorites") != fav.end());
    auto font = idx.retrieve("Increase the font size by 2");
    CHECK(font[0].path == "app.editor.fontSize");
}

TEST_CASE("fallback returns the best-connected symbols") {
    const Index& idx = surface_index();
    std::map<std::string, int> degree;
    for (const auto& s : idx.symbols()) {
        degree[s.path] += static_cast<int>(s.edges.size());
        for (const auto& e : s.edges) degree[e] += 1;
    }
    std::vector<std::pair<std::string, int>> ranked(degree.begin(), degree.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    auto got = idx.retrieve("zzqx qqzz", 4);
    REQUIRE(got.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(got[i].path == ranked[i].first);
}

TEST_CASE("property: ranking matches a brute-force overlap oracle") {
    const Index& idx = surface_index();
    std::vector<std::string> vocab;
    for (const auto& s : idx.symbols())
        for (const auto& t : s.tokens) vocab.push_back(t);
    vocab.push_back("unrelated");
    std::mt19937 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::string query;
        for (int n = 1 + static_cast<int>(rng() % 4); n > 0; --n) query += vocab[rng() % vocab.size()] + " ";
        int k = 1 + static_cast<int>(rng() % 8);
        std::set<std::string> q;
        for (const auto& t : tokenize(query)) q.insert(t);
        std::vector<std::pair<int, std::string>> scored;
        for (const auto& s : idx.symbols()) {
            int score = 0;
            for (const auto& t : q) score += std::count(s.tokens.begin(), s.tokens.end(), t) > 0 ? 1 : 0;
            if (score > 0) scored.push_back({-score, s.path});
        }
        std::sort(scored.begin(), scored.end());
        auto got = idx.retrieve(query, k);
        CAPTURE(query);
        if (scored.empty()) {
            CHECK(got.size() == std::min<std::size_t>(static_cast<std::size_t>(k), idx.size()));
            continue;
        }
        std::size_t direct = 0;
        for (const auto& g : got) direct += g.via_edge ? 0 : 1;
        REQUIRE(direct == std::min<std::size_t>(static_cast<std::size_t>(k), scored.size()));
        for (std::size_t i = 0; i < direct; ++i) {
            CHECK(got[i].path == scored[i].second);
            CHECK(got[i].score == -scored[i].first);
        }
        std::set<std::string> uniq;
        for (const auto& g : got) {
            CHECK(idx.find(g.path) != nullptr);
            CHECK(uniq.insert(g.path).second);
            CHECK(std::count(g.text.begin(), g.text.end(), '\n') <= kMaxSnippetLines);
        }
        for (std::size_t i = direct; i < got.size(); ++i) {
            bool linked = false;
            for (std::size_t j = 0; j < direct; ++j) {
                const auto& e = idx.find(got[j].path)->edges;
                linked = linked || std::find(e.begin(), e.end(), got[i].path) != e.end();
            }
            CHECK(linked);
        }
        CHECK(paths(idx.retrieve(query, k)) == paths(got));
    }
}

TEST_CASE("adding an unrelated symbol keeps the previous order") {
    auto docs = surface_docs();
    Index before(docs);
    docs.push_back({"zz.unrelated", SymbolKind::type, "quokka marsupial", {}});
    docs.push_back({"aa.unrelated", SymbolKind::type, "wombat burrow", {}});
    Index after(docs);
    for (const char* q : {"Play the next song", "Make the second paragraph bold", "Open a new tab", "search Hotel California"}) {
        auto a = paths(before.retrieve(q));
        auto b = paths(after.retrieve(q));
        CHECK(a == b);
    }
}

TEST_CASE("long docs are cut to the snippet line limit") {
    std::string doc;
    for (int i = 0; i < 100; ++i) doc += "line widget " + std::to_string(i) + "\n";
    Index idx({{"long.widget", SymbolKind::example, doc, {}}});
    auto got = idx.retrieve("widget");
    REQUIRE(got.size() == 1);
    CHECK(std::count(got[0].text.begin(), got[0].text.end(), '\n') == kMaxSnippetLines);
}
