#include "jitagent/host/bridge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "jitagent/common.hpp"

namespace jitagent::host {

using nlohmann::json;
using Kind = SurfaceEntry::Kind;

std::string_view to_string(SurfaceEntry::Kind kind) {
    switch (kind) {
        case Kind::property: return "property";
        case Kind::writable_property: return "writable_property";
        case Kind::method: return "method";
        case Kind::global_function: return "global_function";
    }
    return "property";
}

const std::vector<SurfaceEntry>& bridge_surface() {
    static const std::vector<SurfaceEntry> entries = {
        {"app.player.volume", Kind::writable_property, true, "number in [0, 1]",
         "Playback volume of the music player as a fraction between 0 and 1. Assignments are clamped into range.",
         {"app.player.currentTrack"}},
        {"app.player.next", Kind::method, true, "next() -> Track",
         "Play the next song in the play queue (wraps around to the start). The song is added to the listening history. Returns the new current track.",
         {"app.player.queue", "app.player.currentTrack", "app.player.previous"}},
        {"app.player.previous", Kind::method, true, "previous() -> Track",
         "Play the previous song in the play queue (wraps around to the end). The song is added to the listening history. Returns the new current track.",
         {"app.player.queue", "app.player.currentTrack", "app.player.next"}},
        {"app.player.currentTrack", Kind::property, false, "Track {id, title, artist, duration} or null",
         "The song that is currently playing.", {"app.player.queue"}},
        {"app.player.queue", Kind::property, false, "Track[]", "Songs in the play queue, in play order.",
         {"app.player.currentTrack", "app.player.next"}},
        {"app.library.favorites", Kind::method, false, "favorites() -> Track[]",
         "Favorite songs the user liked. Returns data only; the Liked Songs page that shows them is the route library/favorites.",
         {"app.ui.navigate"}},
        {"app.library.history", Kind::method, false, "history() -> {track, timestamp}[]",
         "Listening history of recently played songs, oldest first. Returns data only; the Play History page that shows it is the route library/history.",
         {"app.ui.navigate", "app.ui.find"}},
        {"app.library.search", Kind::method, true, "search(query: string) -> Track[]",
         "Search songs whose title or artist contains the query (case-insensitive) and open the search results page search?q=<query>.",
         {"app.ui.currentRoute"}},
        {"app.editor.tabs", Kind::property, false, "{id, documentId, title, active}[]",
         "Open tabs of the markdown editor in order. Each tab shows one document (file).",
         {"app.editor.activeTab", "app.editor.closeTab"}},
        {"app.editor.activeTab", Kind::property, false, "string", "Id of the active editor tab, i.e. the current file.",
         {"app.editor.tabs", "app.editor.activeDocument.paragraphs"}},
        {"app.editor.openTab", Kind::method, true, "openTab(title?: string, paragraphs?: string[]) -> string",
         "Open a new editor tab holding a new document with the given title and paragraphs. The new tab becomes active. Returns the new tab id.",
         {"app.editor.tabs", "app.editor.activeDocument.paragraphs"}},
        {"app.editor.closeTab", Kind::method, true, "closeTab(id: string)",
         "Close one editor tab by id. The last remaining tab cannot be closed.", {"app.editor.tabs"}},
        {"app.editor.closeOtherTabs", Kind::method, true, "closeOtherTabs()",
         "Close all editor tabs except the active one.", {"app.editor.tabs", "app.editor.activeTab"}},
        {"app.editor.fontSize", Kind::writable_property, true, "integer in [6, 72]",
         "Font size in points of the document in the active tab. Assignments are rounded and clamped into range.",
         {"app.editor.activeDocument.paragraphs"}},
        {"app.editor.activeDocument.paragraphs", Kind::writable_property, true, "string[]",
         "Paragraphs (text blocks) of the document in the active tab. Reading returns a copy; assign a whole array to change them. Markdown formatting such as **bold** is written inline.",
         {"app.editor.activeDocument.title", "app.editor.openTab"}},
        {"app.editor.activeDocument.title", Kind::property, false, "string",
         "File name of the document in the active tab.", {"app.editor.activeTab"}},
        {"app.ui.navigate", Kind::method, true, "navigate(route: string) -> Promise",
         "Go to a page of the app. Routes: home, library, library/favorites, library/history, editor, search?q=<text>. Returns a promise that resolves once the page is shown.",
         {"app.ui.currentRoute", "app.ui.find"}, true},
        {"app.ui.currentRoute", Kind::property, false, "string", "Route of the page currently shown.", {"app.ui.navigate"}},
        {"app.ui.find", Kind::method, false, "find(labelOrKind: string) -> UiNode[]",
         "Find elements on the current page by label (case-insensitive) or by kind (view, tab, button, list, item). Each result has id, kind, label, route and a click() method.",
         {"app.ui.click", "app.ui.navigate"}},
        {"app.ui.click", Kind::method, true, "click(id: string)",
         "Click an element of the current page by id. Elements with a route open that page; editor document tabs become the active tab.",
         {"app.ui.find"}},
        {"console.log", Kind::global_function, false, "console.log(...values)",
         "Print values. Printed lines are returned after execution; console.error lines are marked with [error].", {}},
    };
    return entries;
}

const SurfaceEntry* find_entry(std::string_view path) {
    for (const SurfaceEntry& e : bridge_surface())
        if (e.path == path) return &e;
    return nullptr;
}

bool is_namespace(std::string_view path) {
    return path == "app" || path == "app.player" || path == "app.library" || path == "app.editor" ||
           path == "app.editor.activeDocument" || path == "app.ui";
}

bool is_mutating(const BridgeRequest& request) {
    if (request.kind == AccessKind::read) return false;
    const SurfaceEntry* e = find_entry(request.path);
    if (e == nullptr) return request.kind == AccessKind::write;
    if (request.kind == AccessKind::write) return true;
    return e->kind == Kind::method && e->mutating;
}

namespace {

json track_json(const Track& t) {
    return {{"id", t.id}, {"title", t.title}, {"artist", t.artist}, {"duration", t.duration}};
}

json tracks_json(const HostState& s, const std::vector<std::string>& ids) {
    json arr = json::array();
    for (const auto& id : ids) arr.push_back(track_json(s.library.at(id)));
    return arr;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void arity(const BridgeRequest& r, std::size_t min, std::size_t max) {
    if (r.args.size() < min || r.args.size() > max) {
        std::string expected = min == max ? std::to_string(min) : std::to_string(min) + " to " + std::to_string(max);
        throw ArityError(r.path + " expects " + expected + " argument(s), got " + std::to_string(r.args.size()));
    }
}

const std::string& string_arg(const BridgeRequest& r, std::size_t i, const char* what) {
    if (!r.args.at(i).is_string()) throw ArgumentTypeError(r.path + ": " + what + " must be a string");
    return r.args.at(i).get_ref<const std::string&>();
}

double number_arg(const BridgeRequest& r, std::size_t i, const char* what) {
    const json& v = r.args.at(i);
    if (!v.is_number()) throw ArgumentTypeError(r.path + ": " + what + " must be a number");
    double d = v.get<double>();
    if (std::isnan(d)) throw ArgumentTypeError(r.path + ": " + what + " must not be NaN");
    return d;
}

std::vector<std::string> string_list_arg(const BridgeRequest& r, std::size_t i, const char* what) {
    const json& v = r.args.at(i);
    if (!v.is_array()) throw ArgumentTypeError(r.path + ": " + what + " must be an array of strings");
    std::vector<std::string> out;
    for (const json& e : v) {
        if (!e.is_string()) throw ArgumentTypeError(r.path + ": " + what + " must be an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

// Next id of the form <prefix><n> above every existing numeric suffix.
template <class Range, class IdOf>
std::string next_id(const std::string& prefix, const Range& items, IdOf id_of) {
    long best = 0;
    for (const auto& item : items) {
        const std::string& id = id_of(item);
        if (id.rfind(prefix, 0) != 0) continue;
        try {
            std::size_t used = 0;
            long n = std::stol(id.substr(prefix.size()), &used);
            if (used == id.size() - prefix.size()) best = std::max(best, n);
        } catch (const std::exception&) {
        }
    }
    return prefix + std::to_string(best + 1);
}

void navigate(HostState& s, const std::string& route) {
    if (!is_valid_route(route)) throw DomainError("unknown route '" + route + "'");
    s.current_route = route;
}

json play_step(HostState& s, int delta) {
    auto& p = s.player;
    if (p.queue.empty()) throw DomainError("the play queue is empty");
    auto n = static_cast<long>(p.queue.size());
    long idx = p.current_index ? static_cast<long>(*p.current_index) : (delta > 0 ? -1 : 0);
    idx = ((idx + delta) % n + n) % n;
    p.current_index = static_cast<std::size_t>(idx);
    ++s.logical_clock;
    p.history.push_back({p.queue[static_cast<std::size_t>(idx)], s.logical_clock});
    return track_json(s.library.at(p.queue[static_cast<std::size_t>(idx)]));
}

json tabs_json(const HostState& s) {
    json arr = json::array();
    for (const EditorTab& t : s.editor.tabs)
        arr.push_back({{"id", t.id}, {"documentId", t.document_id}, {"title", s.documents.at(t.document_id).title},
                       {"active", t.id == s.editor.active_tab}});
    return arr;
}

json ui_handle(const UiNode& n) {
    json h = {{"id", n.id}, {"kind", std::string(to_string(n.kind))}, {"label", n.label},
              {"route", n.route ? json(*n.route) : json(nullptr)}};
    h["$methods"] = {{"click", {{"path", "app.ui.click"}, {"args", json::array({n.id})}}}};
    return h;
}

json read_property(const HostState& s, const std::string& path) {
    if (path == "app.player.volume") return s.player.volume;
    if (path == "app.player.currentTrack") {
        if (!s.player.current_index) return nullptr;
        return track_json(s.library.at(s.player.queue.at(*s.player.current_index)));
    }
    if (path == "app.player.queue") return tracks_json(s, s.player.queue);
    if (path == "app.editor.tabs") return tabs_json(s);
    if (path == "app.editor.activeTab") return s.editor.active_tab;
    if (path == "app.editor.fontSize") return s.active_document().font_size;
    if (path == "app.editor.activeDocument.paragraphs") return s.active_document().paragraphs;
    if (path == "app.editor.activeDocument.title") return s.active_document().title;
    if (path == "app.ui.currentRoute") return s.current_route;
    throw UnknownPath(path);
}

json write_property(HostState& s, const BridgeRequest& r) {
    arity(r, 1, 1);
    if (r.path == "app.player.volume") {
        double v = std::clamp(number_arg(r, 0, "volume"), 0.0, 1.0);
        s.player.volume = v;
        ++s.logical_clock;
        return v;
    }
    if (r.path == "app.editor.fontSize") {
        double v = number_arg(r, 0, "fontSize");
        int size = static_cast<int>(std::clamp(std::round(v), 6.0, 72.0));
        s.active_document().font_size = size;
        ++s.logical_clock;
        return size;
    }
    if (r.path == "app.editor.activeDocument.paragraphs") {
        auto paragraphs = string_list_arg(r, 0, "paragraphs");
        s.active_document().paragraphs = paragraphs;
        ++s.logical_clock;
        return paragraphs;
    }
    throw UnknownPath(r.path);
}

json invoke(HostState& s, const BridgeRequest& r) {
    const std::string& path = r.path;
    if (path == "app.player.next" || path == "app.player.previous") {
        arity(r, 0, 0);
        return play_step(s, path == "app.player.next" ? 1 : -1);
    }
    if (path == "app.library.favorites") {
        arity(r, 0, 0);
        return tracks_json(s, s.player.favorites);
    }
    if (path == "app.library.history") {
        arity(r, 0, 0);
        json arr = json::array();
        for (const auto& h : s.player.history)
            arr.push_back({{"track", track_json(s.library.at(h.track_id))}, {"timestamp", h.timestamp}});
        return arr;
    }
    if (path == "app.library.search") {
        arity(r, 1, 1);
        std::string q = string_arg(r, 0, "query");
        std::string needle = lower(q);
        json arr = json::array();
        for (const auto& [id, t] : s.library)
            if (!needle.empty() && (lower(t.title).find(needle) != std::string::npos || lower(t.artist).find(needle) != std::string::npos))
                arr.push_back(track_json(t));
        navigate(s, "search?q=" + q);
        ++s.logical_clock;
        return arr;
    }
    if (path == "app.editor.openTab") {
        arity(r, 0, 2);
        std::string title = "Untitled.md";
        std::vector<std::string> paragraphs;
        if (!r.args.empty() && !r.args[0].is_null()) title = string_arg(r, 0, "title");
        if (r.args.size() > 1 && !r.args[1].is_null()) paragraphs = string_list_arg(r, 1, "paragraphs");
        std::string tab_id = next_id("tab", s.editor.tabs, [](const EditorTab& t) -> const std::string& { return t.id; });
        std::string doc_id = next_id("doc", s.documents, [](const auto& kv) -> const std::string& { return kv.first; });
        int font = s.active_document().font_size;
        s.documents.emplace(doc_id, Document{doc_id, title, std::move(paragraphs), font});
        s.editor.tabs.push_back({tab_id, doc_id});
        s.editor.active_tab = tab_id;
        ++s.logical_clock;
        return tab_id;
    }
    if (path == "app.editor.closeTab") {
        arity(r, 1, 1);
        const std::string& id = string_arg(r, 0, "tab id");
        auto& tabs = s.editor.tabs;
        auto it = std::find_if(tabs.begin(), tabs.end(), [&](const EditorTab& t) { return t.id == id; });
        if (it == tabs.end()) throw DomainError("no tab with id '" + id + "'");
        if (tabs.size() == 1) throw DomainError("cannot close last tab");
        auto index = static_cast<std::size_t>(it - tabs.begin());
        bool was_active = it->id == s.editor.active_tab;
        tabs.erase(it);
        if (was_active) s.editor.active_tab = tabs[index > 0 ? index - 1 : 0].id;
        ++s.logical_clock;
        return nullptr;
    }
    if (path == "app.editor.closeOtherTabs") {
        arity(r, 0, 0);
        EditorTab keep = s.active_tab();
        s.editor.tabs = {keep};
        ++s.logical_clock;
        return nullptr;
    }
    if (path == "app.ui.navigate") {
        arity(r, 1, 1);
        std::string route = string_arg(r, 0, "route");
        if (!route.empty() && route[0] == '/') route.erase(0, 1);
        if (route.empty()) route = "home";
        navigate(s, route);
        ++s.logical_clock;
        return nullptr;
    }
    if (path == "app.ui.find") {
        arity(r, 1, 1);
        const std::string& q = string_arg(r, 0, "label or kind");
        UiNode tree = ui_tree(s);
        json arr = json::array();
        for (const UiNode* n : find_nodes(tree, q)) arr.push_back(ui_handle(*n));
        return arr;
    }
    if (path == "app.ui.click") {
        arity(r, 1, 1);
        const std::string& id = string_arg(r, 0, "element id");
        UiNode tree = ui_tree(s);
        const UiNode* n = find_node_by_id(tree, id);
        if (n == nullptr) throw DomainError("no element with id '" + id + "' on the current page");
        if (n->route) {
            navigate(s, *n->route);
        } else if (id.rfind("doctab-", 0) == 0) {
            s.editor.active_tab = id.substr(7);
        }
        ++s.logical_clock;
        return nullptr;
    }
    throw UnknownPath(path);
}

}  // namespace

json dispatch_in_place(HostState& state, const BridgeRequest& r) {
    const SurfaceEntry* e = find_entry(r.path);
    if (e == nullptr || e->kind == Kind::global_function) {
        if (is_namespace(r.path)) throw ArgumentTypeError(r.path + " is an object, not a " + (r.kind == AccessKind::invoke ? "function" : "value"));
        throw UnknownPath("no bridge entry '" + r.path + "'");
    }
    switch (r.kind) {
        case AccessKind::read:
            if (e->kind == Kind::method) throw ArgumentTypeError(r.path + " is a method; call it as " + e->signature);
            return read_property(state, r.path);
        case AccessKind::write:
            if (e->kind != Kind::writable_property) throw ArgumentTypeError("Cannot assign to read-only " + r.path);
            return write_property(state, r);
        case AccessKind::invoke:
            if (e->kind != Kind::method) throw ArgumentTypeError(r.path + " is not a function");
            return invoke(state, r);
    }
    throw UnknownPath(r.path);
}

DispatchResult dispatch(const HostState& state, const BridgeRequest& request) {
    DispatchResult out{state, nullptr};
    out.value = dispatch_in_place(out.state, request);
    return out;
}

// ---------------------------------------------------------------------------

HostBridge::HostBridge(HostState& state, Hook before_call) : state_(state), before_call_(std::move(before_call)) {}

std::string HostBridge::root_name() const { return std::string(kRootName); }

script::MemberKind HostBridge::member_kind(std::string_view path) const {
    if (is_namespace(path)) return script::MemberKind::object;
    const SurfaceEntry* e = find_entry(path);
    if (e == nullptr) return script::MemberKind::none;
    switch (e->kind) {
        case Kind::property: return script::MemberKind::property;
        case Kind::writable_property: return script::MemberKind::writable_property;
        case Kind::method: return script::MemberKind::method;
        case Kind::global_function: return script::MemberKind::none;
    }
    return script::MemberKind::none;
}

std::vector<std::string> HostBridge::members(std::string_view object_path) const {
    std::vector<std::string> out;
    std::string prefix = std::string(object_path) + ".";
    auto add = [&](const std::string& name) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    };
    for (const char* ns : {"app.player", "app.library", "app.editor", "app.editor.activeDocument", "app.ui"}) {
        std::string p = ns;
        if (p.rfind(prefix, 0) == 0 && p.find('.', prefix.size()) == std::string::npos) add(p.substr(prefix.size()));
    }
    for (const SurfaceEntry& e : bridge_surface()) {
        if (e.path.rfind(prefix, 0) != 0) continue;
        std::string rest = e.path.substr(prefix.size());
        if (rest.find('.') == std::string::npos) add(rest);
    }
    return out;
}

bool HostBridge::returns_promise(std::string_view path) const {
    const SurfaceEntry* e = find_entry(path);
    return e != nullptr && e->returns_promise;
}

json HostBridge::call(const BridgeRequest& request) {
    if (before_call_) before_call_(request);
    ++calls_;
    return dispatch_in_place(state_, request);
}

}  // namespace jitagent::host
