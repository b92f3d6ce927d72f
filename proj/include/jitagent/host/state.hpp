#pragma once

// The reference application: a music player and a markdown editor held as
// plain values. Everything here is pure; mutation happens through dispatch()
// in bridge.hpp.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace jitagent::host {

inline constexpr int kFormatVersion = 1;

struct Track {
    std::string id;
    std::string title;
    std::string artist;
    int duration = 0;  // seconds

    bool operator==(const Track&) const = default;
};

struct HistoryEntry {
    std::string track_id;
    std::int64_t timestamp = 0;  // logical clock value at the time of play

    bool operator==(const HistoryEntry&) const = default;
};

struct PlayerState {
    double volume = 0.5;
    std::vector<std::string> queue;
    std::optional<std::size_t> current_index;
    std::vector<std::string> favorites;
    std::vector<HistoryEntry> history;

    bool operator==(const PlayerState&) const = default;
};

struct Document {
    std::string id;
    std::string title;
    std::vector<std::string> paragraphs;
    int font_size = 14;

    bool operator==(const Document&) const = default;
};

struct EditorTab {
    std::string id;
    std::string document_id;

    bool operator==(const EditorTab&) const = default;
};

struct EditorState {
    std::vector<EditorTab> tabs;
    std::string active_tab;

    bool operator==(const EditorState&) const = default;
};

struct HostState {
    PlayerState player;
    std::map<std::string, Track> library;
    EditorState editor;
    std::map<std::string, Document> documents;
    std::string current_route = "home";
    std::int64_t logical_clock = 0;

    bool operator==(const HostState&) const = default;

    const EditorTab& active_tab() const;
    const Document& active_document() const;
    Document& active_document();
};

enum class UiKind { view, tab, button, list, item };

std::string_view to_string(UiKind kind);

struct UiNode {
    std::string id;
    UiKind kind = UiKind::view;
    std::string label;
    std::optional<std::string> route;
    std::vector<UiNode> children;

    bool operator==(const UiNode&) const = default;
};

// Fixtures ---------------------------------------------------------------

std::vector<std::string> fixture_names();
// Throws UnknownFixture.
HostState init_fixture(std::string_view name);

// Routes -----------------------------------------------------------------

// "home", "library", "library/favorites", "library/history", "editor", or
// "search?q=<text>".
bool is_valid_route(std::string_view route);

// Serialization ----------------------------------------------------------

nlohmann::json to_json(const HostState& state);
// Throws InvalidState on malformed or invariant-violating input.
HostState from_json(const nlohmann::json& j);
// Canonical text form: sorted keys, two-space indent, trailing newline.
std::string serialize(const HostState& state);
HostState deserialize(std::string_view text);
// Throws InvalidState naming the first broken invariant.
void validate(const HostState& state);
// SHA-256 of the canonical serialization.
std::string state_hash(const HostState& state);

// Diff -------------------------------------------------------------------

struct DiffEntry {
    std::string path;  // e.g. "player/volume", "documents/doc1/paragraphs"
    std::optional<nlohmann::json> before;
    std::optional<nlohmann::json> after;

    bool operator==(const DiffEntry&) const = default;
};

struct StateDiff {
    std::vector<DiffEntry> entries;

    bool empty() const { return entries.empty(); }
    bool operator==(const StateDiff&) const = default;
};

StateDiff diff(const HostState& before, const HostState& after);
HostState apply_diff(const HostState& before, const StateDiff& d);
nlohmann::json to_json(const StateDiff& d);
StateDiff diff_from_json(const nlohmann::json& j);

// UI ---------------------------------------------------------------------

UiNode ui_tree(const HostState& state);
// Pre-order search; matches on kind name or case-insensitive label.
std::vector<const UiNode*> find_nodes(const UiNode& root, std::string_view query);
const UiNode* find_node_by_id(const UiNode& root, std::string_view id);

}  // namespace jitagent::host
