#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "jitagent/host/state.hpp"
#include "jitagent/script/interpreter.hpp"

namespace jitagent::host {

using script::AccessKind;
using script::BridgeRequest;

struct SurfaceEntry {
    enum class Kind { property, writable_property, method, global_function };

    std::string path;
    Kind kind = Kind::property;
    bool mutating = false;  // for writable properties this refers to writes
    std::string signature;
    std::string doc;
    std::vector<std::string> edges;
    bool returns_promise = false;
};

std::string_view to_string(SurfaceEntry::Kind kind);

inline constexpr std::string_view kRootName = "app";

// Every entry reachable from action code, in a fixed order.
const std::vector<SurfaceEntry>& bridge_surface();
const SurfaceEntry* find_entry(std::string_view path);
// True for the namespace objects ("app", "app.player", ...).
bool is_namespace(std::string_view path);

// True when the request changes state (writes, and invokes of mutating methods).
bool is_mutating(const BridgeRequest& request);

struct DispatchResult {
    HostState state;
    nlohmann::json value;
};

// Pure: returns the updated state and the call's value. Throws UnknownPath,
// ArityError, ArgumentTypeError, DomainError.
DispatchResult dispatch(const HostState& state, const BridgeRequest& request);
// Same as dispatch but updates `state` in place. On error `state` is unchanged.
nlohmann::json dispatch_in_place(HostState& state, const BridgeRequest& request);

// Adapter that lets the interpreter reach a HostState. `before_call` runs
// ahead of every bridge call and may throw script::GuardDenial.
class HostBridge : public script::Bridge {
public:
    using Hook = std::function<void(const BridgeRequest&)>;

    explicit HostBridge(HostState& state, Hook before_call = {});

    std::string root_name() const override;
    script::MemberKind member_kind(std::string_view path) const override;
    std::vector<std::string> members(std::string_view object_path) const override;
    bool returns_promise(std::string_view path) const override;
    nlohmann::json call(const BridgeRequest& request) override;

    std::size_t call_count() const { return calls_; }

private:
    HostState& state_;
    Hook before_call_;
    std::size_t calls_ = 0;
};

}  // namespace jitagent::host
