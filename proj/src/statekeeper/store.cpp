#include "jitagent/statekeeper/store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "jitagent/common.hpp"

namespace jitagent::statekeeper {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const AuditEntry& e) {
    ordered_json j;
    j["seq"] = e.seq;
    j["timestamp"] = e.timestamp;
    j["session_id"] = e.session_id;
    j["iteration_index"] = e.iteration_index;
    j["code_hash"] = e.code_hash;
    j["verdict_decision"] = e.verdict_decision;
    j["result_status"] = e.result_status;
    j["snapshot_id"] = e.snapshot_id;
    j["state_diff"] = ordered_json::parse(host::to_json(e.state_diff).dump());
    j["tag"] = e.tag;
    return j;
}

AuditEntry audit_entry_from_json(const json& j) {
    AuditEntry e;
    e.seq = j.at("seq").get<std::int64_t>();
    e.timestamp = j.at("timestamp").get<std::int64_t>();
    e.session_id = j.at("session_id").get<std::string>();
    e.iteration_index = j.at("iteration_index").get<int>();
    e.code_hash = j.at("code_hash").get<std::string>();
    e.verdict_decision = j.at("verdict_decision").get<std::string>();
    e.result_status = j.at("result_status").get<std::string>();
    e.snapshot_id = j.at("snapshot_id").get<SnapshotId>();
    e.state_diff = host::diff_from_json(j.at("state_diff"));
    e.tag = j.value("tag", "");
    return e;
}

namespace {

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw StorageError("cannot create directory '" + p.string() + "': " + ec.message());
}

std::optional<SnapshotId> snapshot_id_of(const fs::path& p) {
    std::string name = p.filename().string();
    if (name.rfind("snap-", 0) != 0) return std::nullopt;
    try {
        std::size_t used = 0;
        SnapshotId id = std::stoll(name.substr(5), &used);
        if (used != name.size() - 5 || id <= 0) return std::nullopt;
        return id;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

bool safe_session_id(const std::string& id) {
    return !id.empty() && id.size() < 128 &&
           std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '_'; });
}

}  // namespace

Store::Store(fs::path data_dir) : dir_(std::move(data_dir)) {
    ensure_dir(dir_);
    ensure_dir(dir_ / "snapshots");
    ensure_dir(dir_ / "sessions");
    load_audit();
    for (const auto& e : fs::directory_iterator(dir_ / "snapshots"))
        if (auto id = snapshot_id_of(e.path())) max_snapshot_ever_ = std::max(max_snapshot_ever_, *id);
    for (const auto& a : audit_) max_snapshot_ever_ = std::max(max_snapshot_ever_, a.snapshot_id);
    if (fs::exists(dir_ / "snapshots" / "last-id")) {
        try {
            max_snapshot_ever_ = std::max<SnapshotId>(max_snapshot_ever_, std::stoll(read_file((dir_ / "snapshots" / "last-id").string())));
        } catch (const std::invalid_argument&) {
        }
    }
    next_snapshot_ = max_snapshot_ever_ + 1;
}

void Store::load_audit() {
    fs::path path = dir_ / "audit.log";
    if (!fs::exists(path)) return;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("cannot read '" + path.string() + "'");
    std::string line;
    std::uintmax_t good_bytes = 0;
    std::uintmax_t offset = 0;
    while (std::getline(in, line)) {
        bool complete = !in.eof();
        offset += line.size() + (complete ? 1 : 0);
        if (!complete) break;  // torn final line from an interrupted append
        try {
            audit_.push_back(audit_entry_from_json(json::parse(line)));
            good_bytes = offset;
        } catch (const std::exception&) {
            break;
        }
    }
    in.close();
    if (good_bytes != fs::file_size(path)) fs::resize_file(path, good_bytes);
}

fs::path Store::snapshot_path(SnapshotId id) const { return dir_ / "snapshots" / ("snap-" + std::to_string(id)); }

SnapshotId Store::take_snapshot(const host::HostState& state, const std::string& session_id, int iteration_index) {
    host::validate(state);
    std::unique_lock lock(mutex_);
    SnapshotId id = next_snapshot_;
    ordered_json j;
    j["id"] = id;
    j["created_at"] = wall_clock_ms();
    j["session_id"] = session_id;
    j["iteration_index"] = iteration_index;
    j["state"] = host::serialize(state);
    try {
        write_file_atomic(snapshot_path(id).string(), j.dump() + "\n");
        write_file_atomic((dir_ / "snapshots" / "last-id").string(), std::to_string(id));
    } catch (const Error& e) {
        throw StorageError(std::string("cannot write snapshot: ") + e.what());
    }
    ++next_snapshot_;
    max_snapshot_ever_ = id;
    return id;
}

Snapshot Store::snapshot(SnapshotId id) const {
    std::shared_lock lock(mutex_);
    fs::path path = snapshot_path(id);
    if (!fs::exists(path)) throw UnknownSnapshot("no snapshot with id " + std::to_string(id));
    try {
        json j = json::parse(read_file(path.string()));
        return Snapshot{j.at("id").get<SnapshotId>(), j.at("state").get<std::string>(), j.at("created_at").get<std::int64_t>(),
                        j.at("session_id").get<std::string>(), j.at("iteration_index").get<int>()};
    } catch (const json::exception& e) {
        throw StorageError("corrupt snapshot " + std::to_string(id) + ": " + e.what());
    }
}

std::vector<SnapshotId> Store::snapshot_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<SnapshotId> ids;
    for (const auto& e : fs::directory_iterator(dir_ / "snapshots"))
        if (auto id = snapshot_id_of(e.path())) ids.push_back(*id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

host::HostState Store::rollback(SnapshotId id, const std::string& session_id, const host::HostState* current) {
    host::HostState restored = snapshot(id).restore();
    AuditEntry e;
    e.session_id = session_id;
    e.result_status = "rolled_back";
    e.snapshot_id = id;
    e.tag = "rollback";
    if (current != nullptr) e.state_diff = host::diff(*current, restored);
    append_audit(std::move(e));
    return restored;
}

AuditEntry Store::append_audit(AuditEntry entry) {
    std::unique_lock lock(mutex_);
    if (entry.snapshot_id <= 0 || entry.snapshot_id > max_snapshot_ever_)
        throw UnknownSnapshot("audit entry references unknown snapshot " + std::to_string(entry.snapshot_id));
    entry.seq = audit_.empty() ? 1 : audit_.back().seq + 1;
    entry.timestamp = wall_clock_ms();
    std::string line = to_json(entry).dump() + "\n";
    std::ofstream out(dir_ / "audit.log", std::ios::binary | std::ios::app);
    out << line;
    out.flush();
    if (!out) throw StorageError("cannot append to audit log");
    audit_.push_back(entry);
    return entry;
}

std::vector<AuditEntry> Store::query_audit(const AuditFilter& f) const {
    std::shared_lock lock(mutex_);
    std::vector<AuditEntry> out;
    for (const AuditEntry& e : audit_) {
        if (f.session_id && e.session_id != *f.session_id) continue;
        if (f.from_seq && e.seq < *f.from_seq) continue;
        if (f.to_seq && e.seq > *f.to_seq) continue;
        out.push_back(e);
    }
    return out;
}

void Store::save_state(const host::HostState& state) {
    std::unique_lock lock(mutex_);
    write_file_atomic((dir_ / "state.json").string(), host::serialize(state));
}

std::optional<host::HostState> Store::load_state() const {
    std::shared_lock lock(mutex_);
    fs::path path = dir_ / "state.json";
    if (!fs::exists(path)) return std::nullopt;
    return host::deserialize(read_file(path.string()));
}

void Store::save_session(const std::string& session_id, const json& record) {
    if (!safe_session_id(session_id)) throw StorageError("invalid session id '" + session_id + "'");
    std::unique_lock lock(mutex_);
    write_file_atomic((dir_ / "sessions" / (session_id + ".json")).string(), record.dump() + "\n");
}

std::optional<json> Store::load_session(const std::string& session_id) const {
    if (!safe_session_id(session_id)) return std::nullopt;
    std::shared_lock lock(mutex_);
    fs::path path = dir_ / "sessions" / (session_id + ".json");
    if (!fs::exists(path)) return std::nullopt;
    return json::parse(read_file(path.string()));
}

std::vector<json> Store::load_sessions() const {
    std::shared_lock lock(mutex_);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir_ / "sessions"))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<json> out;
    for (const auto& p : files) {
        try {
            out.push_back(json::parse(read_file(p.string())));
        } catch (const json::exception&) {
        }
    }
    return out;
}

std::size_t Store::gc(std::size_t keep_last) {
    std::vector<SnapshotId> ids = snapshot_ids();
    std::unique_lock lock(mutex_);
    if (ids.size() <= keep_last) return 0;
    std::size_t removed = 0;
    for (std::size_t i = 0; i + keep_last < ids.size(); ++i) {
        std::error_code ec;
        if (fs::remove(snapshot_path(ids[i]), ec)) ++removed;
    }
    return removed;
}

}  // namespace jitagent::statekeeper
