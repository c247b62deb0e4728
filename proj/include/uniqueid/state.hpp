#pragma once

#include "uniqueid/audit.hpp"
#include "uniqueid/governance.hpp"
#include "uniqueid/ledger.hpp"
#include "uniqueid/params.hpp"
#include "uniqueid/registry.hpp"
#include "uniqueid/tokens.hpp"
#include "uniqueid/trust.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace uniqueid {

/// Everything derivable from the event log. apply() is the only mutation
/// path, both for live runs and for replay: it validates the event against
/// the current state and throws ProtocolError before changing anything.
struct ApplicationState {
    bool initialized = false;
    bool genesis_open = true; // until the first BeaconAdvanced
    ProtocolParams params;
    RandomnessBeacon beacon;
    Epoch epoch = 0;

    RegistryState registry;
    TrustState trust;
    TokenState tokens;
    governance::GovernanceState governance;
    AuditState audit;

    void apply(const Event& event);

    Json to_json() const;
    Digest state_hash() const;
};

class RejectedEvent : public std::runtime_error {
public:
    RejectedEvent(std::uint64_t height, const ProtocolError& cause)
        : std::runtime_error("event " + std::to_string(height) + " rejected: " + cause.what()), height_(height),
          code_(cause.code())
    {
    }

    std::uint64_t height() const noexcept { return height_; }
    ErrorCode code() const noexcept { return code_; }

private:
    std::uint64_t height_;
    ErrorCode code_;
};

using ReplayObserver = std::function<void(const Event&, const ApplicationState&)>;

/// Rebuilds state from genesis; the observer sees the state after each event.
/// Throws RejectedEvent at the first event invalid against the state so far.
ApplicationState replay(std::span<const Event> events, const ReplayObserver& observer = {});

// Queries shared by commands and validation.

bool is_eligible_verifier(const ApplicationState& s, const PersonId& pk, Epoch epoch);

/// Eligible verifiers of a city in ascending pk order, minus `subject` and
/// anyone who already certified it.
std::vector<PersonId> assignable_verifiers(const ApplicationState& s, const std::string& city, const PersonId& subject,
                                           Epoch epoch);

/// Every eligible verifier of the city (the A-judge panel), minus `subject`.
std::vector<PersonId> ajudge_panel(const ApplicationState& s, const std::string& city, const PersonId& subject,
                                   Epoch epoch);

/// base_stake * (1 + pending stake-gated claims in city).
Amount required_stake(const ApplicationState& s, const std::string& city);

std::int64_t invitations_remaining(const ApplicationState& s, const PersonId& pk);
std::int64_t sponsor_quota_remaining(const ApplicationState& s, const PersonId& pk, Epoch epoch);
std::int64_t recheck_quota_remaining(const ApplicationState& s, const PersonId& pk, Epoch epoch);

/// The single verifier the beacon assigns to a renewal: drawn from the
/// A-judge panel with the identity's next assignment seq.
PersonId renewal_verifier(const ApplicationState& s, const PersonId& pk, Epoch epoch);

/// The representative the election rule yields for a group of the given
/// layer (0 = communities); higher layers with no in-group delegations fall
/// back to the member with the largest lower-layer mandate, at support 0.
governance::Election expected_election(const ApplicationState& s, int layer, const governance::Group& group);

/// In-group delegations currently held by the group's representative.
std::int64_t current_support(const ApplicationState& s, const governance::Group& group);

/// Registry state dump: array of IdentityRecord snapshots in pk order.
Json registry_dump(const ApplicationState& s);

} // namespace uniqueid
