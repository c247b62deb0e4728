#pragma once

#include "uniqueid/common.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace uniqueid {

using Json = nlohmann::json;

enum class EventKind {
    GenesisParams,
    BeaconAdvanced,
    TokensAllocated,
    TokensTransferred,
    IdentityGenesis,
    VerifierRegistered,
    TrustBootstrapped,
    IdentityClaimed,
    StakeLocked,
    StakeReturned,
    StakeForfeited,
    StakeSlashed,
    DedupChecked,
    DedupAdjudicated,
    VerifierAssigned,
    AssignmentVoided,
    CertificateIssued,
    CertificateRejected,
    IdentityVerified,
    TokensMinted,
    IdentityRevoked,
    TrustCircleDeclared,
    IdentityRecovered,
    RenewalCertified,
    RenewalRejected,
    IdentityExpired,
    TrustDelegated,
    TrustSuspended,
    CommunitiesFormed,
    LayerFormed,
    RepresentativeElected,
    RepresentativeInvalidated,
    ProposalOpened,
    ProposalTallied,
    ParameterChanged,
    AJudgeCalled,
    AJudgeAdjudicated,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view name);

struct Event {
    std::uint64_t height = 0;
    Epoch epoch = 0;
    EventKind kind = EventKind::GenesisParams;
    Json payload = Json::object();
    Digest prev_hash{};
    Digest hash{};
};

/// Canonical bytes hashed for an event: compact JSON with sorted keys over
/// (epoch, height, kind, payload, prev_hash). Payloads carry only integers,
/// booleans, strings, arrays and objects; byte fields are lowercase hex.
std::string canonical_body(std::uint64_t height, const Digest& prev_hash, Epoch epoch, EventKind kind,
                           const Json& payload);

Digest compute_event_hash(std::uint64_t height, const Digest& prev_hash, Epoch epoch, EventKind kind,
                          const Json& payload);

/// One JSON Lines record (without the trailing newline), including "hash".
std::string to_jsonl_line(const Event& event);

/// Parses one record. Returns nullopt when the line is not valid JSON, lacks
/// a field, or is not byte-identical to its own canonical re-serialization.
std::optional<Event> parse_jsonl_line(std::string_view line);

/// Append-only, hash-chained, single-writer event log.
class Ledger {
public:
    /// Builds the event that append() would add, without adding it.
    Event make_next(EventKind kind, Json payload, Epoch epoch) const;

    /// Adds a pre-built event; it must be the chained successor of the tip.
    const Event& push(Event event);

    const Event& append(EventKind kind, Json payload, Epoch epoch)
    {
        return push(make_next(kind, std::move(payload), epoch));
    }

    std::span<const Event> events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }
    Digest tip_hash() const { return events_.empty() ? Digest{} : events_.back().hash; }

    void write_jsonl(std::ostream& out) const;

private:
    std::vector<Event> events_;
};

/// Lowest height whose digest, link or height is wrong; nullopt if the chain
/// is intact.
std::optional<std::uint64_t> verify_chain(std::span<const Event> events);

struct LoadedLedger {
    std::vector<Event> events;                  // the parseable, chained prefix
    std::optional<std::uint64_t> first_invalid; // nullopt iff every line is valid
};

LoadedLedger load_jsonl(std::istream& in);

// Payload field accessors. They throw ProtocolError(InvalidEvent) when a
// field is missing or has the wrong type.
std::int64_t field_int(const Json& payload, const char* key);
bool field_bool(const Json& payload, const char* key);
const std::string& field_str(const Json& payload, const char* key);
PersonId field_pk(const Json& payload, const char* key);
Digest field_digest(const Json& payload, const char* key);
const Json& field_array(const Json& payload, const char* key);

} // namespace uniqueid
