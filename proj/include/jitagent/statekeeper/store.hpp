#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitagent/host/state.hpp"

namespace jitagent::statekeeper {

using SnapshotId = std::int64_t;

struct Snapshot {
    SnapshotId id = 0;
    std::string state;  // canonical serialization of the HostState
    std::int64_t created_at = 0;
    std::string session_id;
    int iteration_index = 0;

    host::HostState restore() const { return host::deserialize(state); }
};

struct AuditEntry {
    std::int64_t seq = 0;
    std::int64_t timestamp = 0;
    std::string session_id;
    int iteration_index = 0;
    std::string code_hash;
    std::string verdict_decision;
    std::string result_status;
    SnapshotId snapshot_id = 0;
    host::StateDiff state_diff;
    std::string tag;  // "agent", "verification", "raw", "rollback"

    bool operator==(const AuditEntry&) const = default;
};

// One NDJSON line, fields in declaration order.
nlohmann::ordered_json to_json(const AuditEntry& e);
AuditEntry audit_entry_from_json(const nlohmann::json& j);

struct AuditFilter {
    std::optional<std::string> session_id;
    std::optional<std::int64_t> from_seq;  // inclusive
    std::optional<std::int64_t> to_seq;    // inclusive
};

// File-backed snapshots, audit trail and session records under one data
// directory:
//   audit.log            append-only NDJSON audit entries
//   snapshots/snap-<id>  one JSON document per snapshot
//   sessions/<id>.json   latest record of each agent session
//   state.json           the live host state
// Writes are serialized; readers see a consistent prefix.
class Store {
public:
    explicit Store(std::filesystem::path data_dir);

    const std::filesystem::path& data_dir() const { return dir_; }

    SnapshotId take_snapshot(const host::HostState& state, const std::string& session_id, int iteration_index);
    // Throws UnknownSnapshot.
    Snapshot snapshot(SnapshotId id) const;
    std::vector<SnapshotId> snapshot_ids() const;

    // Returns the snapshotted state and records a "rolled_back" audit entry.
    // `current` (when given) is used for the entry's diff.
    host::HostState rollback(SnapshotId id, const std::string& session_id = "", const host::HostState* current = nullptr);

    // Assigns seq and timestamp. Throws UnknownSnapshot when the entry points
    // at a snapshot that was never taken.
    AuditEntry append_audit(AuditEntry entry);
    std::vector<AuditEntry> query_audit(const AuditFilter& filter = {}) const;

    void save_state(const host::HostState& state);
    std::optional<host::HostState> load_state() const;

    void save_session(const std::string& session_id, const nlohmann::json& record);
    std::optional<nlohmann::json> load_session(const std::string& session_id) const;
    std::vector<nlohmann::json> load_sessions() const;

    // Deletes all but the newest `keep_last` snapshots; returns how many went.
    std::size_t gc(std::size_t keep_last);

private:
    std::filesystem::path snapshot_path(SnapshotId id) const;
    void load_audit();

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    std::vector<AuditEntry> audit_;
    SnapshotId next_snapshot_ = 1;
    SnapshotId max_snapshot_ever_ = 0;
};

}  // namespace jitagent::statekeeper
