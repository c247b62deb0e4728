#pragma once

#include "uniqueid/state.hpp"

namespace uniqueid::detail {

[[noreturn]] inline void reject(ErrorCode code, const std::string& detail)
{
    throw ProtocolError(code, detail);
}

inline IdentityRecord& identity(ApplicationState& s, const PersonId& pk)
{
    auto it = s.registry.identities.find(pk);
    if (it == s.registry.identities.end()) reject(ErrorCode::UnknownIdentity, pk.hex());
    return it->second;
}

inline const IdentityRecord& identity(const ApplicationState& s, const PersonId& pk)
{
    const auto* r = s.registry.find(pk);
    if (!r) reject(ErrorCode::UnknownIdentity, pk.hex());
    return *r;
}

/// Status transition out of Verified: the identity's trust token stops counting.
void leave_verified(ApplicationState& s, IdentityRecord& r);

PersonId renewal_assignee(const ApplicationState& s, const IdentityRecord& r, Epoch epoch);

governance::DelegateLookup trust_lookup(const ApplicationState& s);

// Each returns false when the event kind belongs to another module.
bool apply_registry_event(ApplicationState& s, const Event& ev);
bool apply_trust_event(ApplicationState& s, const Event& ev);
bool apply_token_event(ApplicationState& s, const Event& ev);
bool apply_governance_event(ApplicationState& s, const Event& ev);
bool apply_audit_event(ApplicationState& s, const Event& ev);

Json tokens_to_json(const TokenState& t);
Json trust_to_json(const TrustState& t);
Json governance_to_json(const governance::GovernanceState& g);
Json audit_to_json(const AuditState& a);

} // namespace uniqueid::detail
