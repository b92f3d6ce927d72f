#include "jitagent/host/state.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "jitagent/common.hpp"

namespace jitagent::host {

using nlohmann::json;

const EditorTab& HostState::active_tab() const {
    for (const EditorTab& t : editor.tabs)
        if (t.id == editor.active_tab) return t;
    throw InvalidState("active tab '" + editor.active_tab + "' does not exist");
}

const Document& HostState::active_document() const {
    const std::string& id = active_tab().document_id;
    auto it = documents.find(id);
    if (it == documents.end()) throw InvalidState("document '" + id + "' does not exist");
    return it->second;
}

Document& HostState::active_document() {
    const std::string id = active_tab().document_id;
    auto it = documents.find(id);
    if (it == documents.end()) throw InvalidState("document '" + id + "' does not exist");
    return it->second;
}

std::string_view to_string(UiKind kind) {
    switch (kind) {
        case UiKind::view: return "view";
        case UiKind::tab: return "tab";
        case UiKind::button: return "button";
        case UiKind::list: return "list";
        case UiKind::item: return "item";
    }
    return "view";
}

// ---------------------------------------------------------------------------
// fixtures

namespace {

HostState default_fixture() {
    HostState s;
    const std::vector<Track> tracks = {
        {"t01", "Hotel California", "Eagles", 391},
        {"t02", "Bohemian Rhapsody", "Queen", 354},
        {"t03", "Imagine", "John Lennon", 183},
        {"t04", "Stairway to Heaven", "Led Zeppelin", 482},
        {"t05", "Billie Jean", "Michael Jackson", 294},
        {"t06", "Smells Like Teen Spirit", "Nirvana", 301},
        {"t07", "Yesterday", "The Beatles", 125},
        {"t08", "Wonderwall", "Oasis", 258},
        {"t09", "Take Five", "The Dave Brubeck Quartet", 324},
        {"t10", "Clair de Lune", "Claude Debussy", 300},
        {"t11", "Africa", "Toto", 295},
        {"t12", "Hallelujah", "Leonard Cohen", 279},
    };
    for (const Track& t : tracks) s.library.emplace(t.id, t);
    s.player.volume = 0.5;
    s.player.queue = {"t02", "t05", "t08", "t11", "t03"};
    s.player.current_index = 1;
    s.player.favorites = {"t01", "t04", "t09"};
    s.player.history = {{"t07", 1}, {"t02", 2}, {"t10", 3}, {"t12", 4}, {"t05", 5}};
    s.logical_clock = 5;

    Document doc;
    doc.id = "doc1";
    doc.title = "notes.md";
    doc.font_size = 14;
    doc.paragraphs = {
        "# Weekly Notes",
        "Finish the quarterly report draft.",
        "Review pull requests from the team.",
        "Plan the offsite agenda.",
        "Book travel for the conference.",
    };
    s.documents.emplace(doc.id, doc);
    s.editor.tabs = {{"tab1", "doc1"}};
    s.editor.active_tab = "tab1";
    s.current_route = "home";
    return s;
}

HostState empty_editor_fixture() {
    HostState s = default_fixture();
    s.documents.at("doc1").paragraphs.clear();
    return s;
}

HostState three_tabs_fixture() {
    HostState s = default_fixture();
    Document todo{"doc2", "todo.md", {"# Todo", "Water the plants.", "Call the bank."}, 14};
    Document ideas{"doc3", "ideas.md", {"# Ideas", "A playlist generator for rainy days."}, 14};
    s.documents.emplace(todo.id, todo);
    s.documents.emplace(ideas.id, ideas);
    s.editor.tabs = {{"tab1", "doc1"}, {"tab2", "doc2"}, {"tab3", "doc3"}};
    s.editor.active_tab = "tab2";
    return s;
}

}  // namespace

std::vector<std::string> fixture_names() { return {"default", "empty-editor", "three-tabs"}; }

HostState init_fixture(std::string_view name) {
    if (name == "default") return default_fixture();
    if (name == "empty-editor") return empty_editor_fixture();
    if (name == "three-tabs") return three_tabs_fixture();
    throw UnknownFixture("unknown fixture '" + std::string(name) + "'");
}

bool is_valid_route(std::string_view route) {
    static const std::set<std::string, std::less<>> fixed = {"home", "library", "library/favorites", "library/history", "editor"};
    if (fixed.count(route) > 0) return true;
    return route.substr(0, 9) == "search?q=";
}

// ---------------------------------------------------------------------------
// serialization

json to_json(const HostState& s) {
    json j;
    j["format_version"] = kFormatVersion;
    json player;
    player["volume"] = s.player.volume;
    player["queue"] = s.player.queue;
    player["current_index"] = s.player.current_index ? json(*s.player.current_index) : json(nullptr);
    player["favorites"] = s.player.favorites;
    json history = json::array();
    for (const auto& h : s.player.history) history.push_back({{"track_id", h.track_id}, {"timestamp", h.timestamp}});
    player["history"] = history;
    j["player"] = player;
    json library = json::object();
    for (const auto& [id, t] : s.library)
        library[id] = {{"id", t.id}, {"title", t.title}, {"artist", t.artist}, {"duration", t.duration}};
    j["library"] = library;
    json tabs = json::array();
    for (const auto& t : s.editor.tabs) tabs.push_back({{"id", t.id}, {"document_id", t.document_id}});
    j["editor"] = {{"tabs", tabs}, {"active_tab", s.editor.active_tab}};
    json documents = json::object();
    for (const auto& [id, d] : s.documents)
        documents[id] = {{"id", d.id}, {"title", d.title}, {"paragraphs", d.paragraphs}, {"font_size", d.font_size}};
    j["documents"] = documents;
    j["current_route"] = s.current_route;
    j["logical_clock"] = s.logical_clock;
    return j;
}

HostState from_json(const json& j) {
    HostState s;
    try {
        if (j.value("format_version", 0) != kFormatVersion)
            throw InvalidState("unsupported format_version " + j.value("format_version", json(nullptr)).dump());
        const json& p = j.at("player");
        s.player.volume = p.at("volume").get<double>();
        s.player.queue = p.at("queue").get<std::vector<std::string>>();
        if (!p.at("current_index").is_null()) s.player.current_index = p.at("current_index").get<std::size_t>();
        s.player.favorites = p.at("favorites").get<std::vector<std::string>>();
        for (const json& h : p.at("history"))
            s.player.history.push_back({h.at("track_id").get<std::string>(), h.at("timestamp").get<std::int64_t>()});
        for (const auto& [id, t] : j.at("library").items())
            s.library.emplace(id, Track{t.at("id").get<std::string>(), t.at("title").get<std::string>(),
                                        t.at("artist").get<std::string>(), t.at("duration").get<int>()});
        for (const json& t : j.at("editor").at("tabs"))
            s.editor.tabs.push_back({t.at("id").get<std::string>(), t.at("document_id").get<std::string>()});
        s.editor.active_tab = j.at("editor").at("active_tab").get<std::string>();
        for (const auto& [id, d] : j.at("documents").items())
            s.documents.emplace(id, Document{d.at("id").get<std::string>(), d.at("title").get<std::string>(),
                                             d.at("paragraphs").get<std::vector<std::string>>(), d.at("font_size").get<int>()});
        s.current_route = j.at("current_route").get<std::string>();
        s.logical_clock = j.at("logical_clock").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw InvalidState(std::string("malformed host state: ") + e.what());
    }
    validate(s);
    return s;
}

std::string serialize(const HostState& state) { return to_json(state).dump(2) + "\n"; }

HostState deserialize(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidState(std::string("host state is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

void validate(const HostState& s) {
    auto fail = [](const std::string& msg) { throw InvalidState(msg); };
    const PlayerState& p = s.player;
    if (!(p.volume >= 0.0 && p.volume <= 1.0)) fail("volume out of [0,1]");
    if (p.current_index && *p.current_index >= p.queue.size()) fail("current_index outside the queue");
    for (const auto& [id, t] : s.library) {
        if (id != t.id) fail("library key '" + id + "' differs from track id");
        if (t.duration <= 0) fail("track '" + id + "' has non-positive duration");
    }
    auto known = [&](const std::string& id, const char* where) {
        if (s.library.count(id) == 0) fail(std::string(where) + " references unknown track '" + id + "'");
    };
    for (const auto& id : p.queue) known(id, "queue");
    std::set<std::string> favs;
    for (const auto& id : p.favorites) {
        known(id, "favorites");
        if (!favs.insert(id).second) fail("duplicate favorite '" + id + "'");
    }
    for (const auto& h : p.history) known(h.track_id, "history");
    for (std::size_t i = 1; i < p.history.size(); ++i)
        if (p.history[i].timestamp < p.history[i - 1].timestamp) fail("history timestamps out of order");
    if (s.editor.tabs.empty()) fail("editor has no tabs");
    std::set<std::string> tab_ids;
    bool active_found = false;
    for (const auto& t : s.editor.tabs) {
        if (!tab_ids.insert(t.id).second) fail("duplicate tab id '" + t.id + "'");
        if (s.documents.count(t.document_id) == 0) fail("tab '" + t.id + "' references unknown document");
        if (t.id == s.editor.active_tab) active_found = true;
    }
    if (!active_found) fail("active tab '" + s.editor.active_tab + "' does not exist");
    for (const auto& [id, d] : s.documents) {
        if (id != d.id) fail("document key '" + id + "' differs from document id");
        if (d.font_size < 6 || d.font_size > 72) fail("font size of '" + id + "' out of [6,72]");
    }
    if (!is_valid_route(s.current_route)) fail("unknown route '" + s.current_route + "'");
    if (s.logical_clock < 0) fail("negative logical clock");
}

std::string state_hash(const HostState& state) { return sha256_hex(serialize(state)); }

// ---------------------------------------------------------------------------
// diff

namespace {

void diff_json(const json& a, const json& b, const std::string& path, std::vector<DiffEntry>& out) {
    if (a == b) return;
    if (a.is_object() && b.is_object()) {
        std::set<std::string> keys;
        for (const auto& [k, v] : a.items()) keys.insert(k);
        for (const auto& [k, v] : b.items()) keys.insert(k);
        for (const auto& k : keys) {
            std::string child = path.empty() ? k : path + "/" + k;
            bool in_a = a.contains(k);
            bool in_b = b.contains(k);
            if (in_a && in_b) diff_json(a.at(k), b.at(k), child, out);
            else if (in_a) out.push_back({child, std::optional<json>(a.at(k)), std::nullopt});
            else out.push_back({child, std::nullopt, std::optional<json>(b.at(k))});
        }
        return;
    }
    out.push_back({path, std::optional<json>(a), std::optional<json>(b)});
}

json::json_pointer pointer_for(const std::string& path) {
    std::string p;
    std::size_t start = 0;
    while (start <= path.size()) {
        auto slash = path.find('/', start);
        std::string part = path.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
        std::string escaped;
        for (char c : part) {
            if (c == '~') escaped += "~0";
            else escaped += c;
        }
        p += "/" + escaped;
        if (slash == std::string::npos) break;
        start = slash + 1;
    }
    return json::json_pointer(p);
}

}  // namespace

StateDiff diff(const HostState& before, const HostState& after) {
    json a = to_json(before);
    json b = to_json(after);
    a.erase("format_version");
    b.erase("format_version");
    StateDiff d;
    diff_json(a, b, "", d.entries);
    return d;
}

HostState apply_diff(const HostState& before, const StateDiff& d) {
    json j = to_json(before);
    for (const DiffEntry& e : d.entries) {
        auto ptr = pointer_for(e.path);
        if (e.after) {
            j[ptr] = *e.after;
        } else if (j.contains(ptr)) {
            j[ptr.parent_pointer()].erase(ptr.back());
        }
    }
    return from_json(j);
}

json to_json(const StateDiff& d) {
    json arr = json::array();
    for (const DiffEntry& e : d.entries) {
        json entry = {{"path", e.path}};
        if (e.before) entry["before"] = *e.before;
        if (e.after) entry["after"] = *e.after;
        arr.push_back(entry);
    }
    return arr;
}

StateDiff diff_from_json(const json& j) {
    StateDiff d;
    for (const json& e : j) {
        DiffEntry entry;
        entry.path = e.at("path").get<std::string>();
        if (e.contains("before")) entry.before = e.at("before");
        if (e.contains("after")) entry.after = e.at("after");
        d.entries.push_back(std::move(entry));
    }
    return d;
}

// ---------------------------------------------------------------------------
// ui

namespace {

UiNode node(std::string id, UiKind kind, std::string label, std::optional<std::string> route = std::nullopt) {
    return UiNode{std::move(id), kind, std::move(label), std::move(route), {}};
}

std::string track_label(const HostState& s, const std::string& id) {
    const Track& t = s.library.at(id);
    return t.title + " - " + t.artist;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void library_tabs(UiNode& root) {
    root.children.push_back(node("lib-playlists", UiKind::tab, "Playlists"));
    root.children.push_back(node("lib-albums", UiKind::tab, "Albums"));
    root.children.push_back(node("lib-artists", UiKind::tab, "Artists"));
    root.children.push_back(node("lib-liked", UiKind::tab, "Liked Songs", "library/favorites"));
    root.children.push_back(node("lib-cloud", UiKind::tab, "Cloud Disk"));
    root.children.push_back(node("lib-history", UiKind::tab, "Play History", "library/history"));
}

}  // namespace

UiNode ui_tree(const HostState& s) {
    const std::string& route = s.current_route;
    if (route == "home") {
        UiNode root = node("root", UiKind::view, "Home");
        root.children.push_back(node("nav-home", UiKind::tab, "Home", "home"));
        root.children.push_back(node("nav-library", UiKind::tab, "Library", "library"));
        root.children.push_back(node("nav-search", UiKind::tab, "Search", "search?q="));
        root.children.push_back(node("nav-editor", UiKind::tab, "Editor", "editor"));
        return root;
    }
    if (route == "library" || route == "library/favorites" || route == "library/history") {
        UiNode root = node("root", UiKind::view, "Library");
        library_tabs(root);
        if (route == "library/favorites") {
            UiNode list = node("favorites-list", UiKind::list, "Liked Songs");
            for (std::size_t i = 0; i < s.player.favorites.size(); ++i)
                list.children.push_back(node("fav-" + std::to_string(i), UiKind::item, track_label(s, s.player.favorites[i])));
            root.children.push_back(std::move(list));
        } else if (route == "library/history") {
            UiNode list = node("history-list", UiKind::list, "Play History");
            // most recent first, as a listening-history page shows it
            for (std::size_t i = s.player.history.size(); i-- > 0;)
                list.children.push_back(node("hist-" + std::to_string(i), UiKind::item, track_label(s, s.player.history[i].track_id)));
            root.children.push_back(std::move(list));
        }
        root.children.push_back(node("btn-home", UiKind::button, "Back", "home"));
        return root;
    }
    if (route == "editor") {
        UiNode root = node("root", UiKind::view, "Editor");
        for (const EditorTab& t : s.editor.tabs)
            root.children.push_back(node("doctab-" + t.id, UiKind::tab, s.documents.at(t.document_id).title));
        root.children.push_back(node("btn-home", UiKind::button, "Back", "home"));
        return root;
    }
    // search?q=...
    std::string q = route.substr(9);
    UiNode root = node("root", UiKind::view, "Search");
    UiNode list = node("search-results", UiKind::list, "Results for " + q);
    std::string needle = lower(q);
    std::size_t i = 0;
    for (const auto& [id, t] : s.library) {
        if (needle.empty()) break;
        if (lower(t.title).find(needle) != std::string::npos || lower(t.artist).find(needle) != std::string::npos)
            list.children.push_back(node("result-" + std::to_string(i++), UiKind::item, track_label(s, id)));
    }
    root.children.push_back(std::move(list));
    root.children.push_back(node("btn-home", UiKind::button, "Back", "home"));
    return root;
}

std::vector<const UiNode*> find_nodes(const UiNode& root, std::string_view query) {
    std::vector<const UiNode*> out;
    std::string q = lower(query);
    std::vector<const UiNode*> stack{&root};
    while (!stack.empty()) {
        const UiNode* n = stack.back();
        stack.pop_back();
        if (to_string(n->kind) == q || lower(n->label) == q) out.push_back(n);
        for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(&*it);
    }
    return out;
}

const UiNode* find_node_by_id(const UiNode& root, std::string_view id) {
    if (root.id == id) return &root;
    for (const UiNode& c : root.children)
        if (const UiNode* n = find_node_by_id(c, id)) return n;
    return nullptr;
}

}  // namespace jitagent::host
