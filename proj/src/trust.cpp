#include "apply_internal.hpp"

namespace uniqueid::detail {

namespace {

void apply_bootstrapped(ApplicationState& s, const Event& ev)
{
    if (!s.genesis_open) reject(ErrorCode::InvalidEvent, "trust bootstrap only at genesis");
    const PersonId pk = field_pk(ev.payload, "pk");
    const auto& r = identity(s, pk);
    if (r.entry_gate.kind != GateKind::Genesis) reject(ErrorCode::InvalidEvent, "bootstrap only for genesis verifiers");
    const auto weight = field_int(ev.payload, "weight");
    if (weight < 0 || (weight > 0 && weight >= s.params.trust_threshold_for(r.city)))
        reject(ErrorCode::InvalidEvent, "bootstrap weight must stay below the threshold");
    s.trust.bootstrap[pk] = weight;
}

void apply_delegated(ApplicationState& s, const Event& ev)
{
    const PersonId from = field_pk(ev.payload, "from");
    const PersonId to = field_pk(ev.payload, "to");
    if (from == to) reject(ErrorCode::SelfDelegation, from.hex());
    if (!s.registry.is_verified(from)) reject(ErrorCode::Unverified, from.hex());
    if (!s.registry.is_verified(to)) reject(ErrorCode::Unverified, to.hex());
    s.trust.delegate(from, to);
}

void apply_suspended(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    auto due = s.audit.suspension_due.find(pk);
    if (due == s.audit.suspension_due.end() || due->second != field_int(ev.payload, "call"))
        reject(ErrorCode::InvalidEvent, "no corruption verdict against " + pk.hex());
    const Epoch until = field_int(ev.payload, "until");
    if (until != ev.epoch + s.params.suspension_epochs) reject(ErrorCode::InvalidEvent, "wrong suspension end");
    s.audit.suspension_due.erase(due);
    s.trust.suspend(pk, until);
}

} // namespace

bool apply_trust_event(ApplicationState& s, const Event& ev)
{
    switch (ev.kind) {
    case EventKind::TrustBootstrapped: apply_bootstrapped(s, ev); return true;
    case EventKind::TrustDelegated: apply_delegated(s, ev); return true;
    case EventKind::TrustSuspended: apply_suspended(s, ev); return true;
    default: return false;
    }
}

Json trust_to_json(const TrustState& t)
{
    Json delegations = Json::object();
    for (const auto& [from, to] : t.delegation_of)
        delegations[from.hex()] = to.hex();
    Json bootstrap = Json::object();
    for (const auto& [pk, w] : t.bootstrap)
        bootstrap[pk.hex()] = w;
    Json suspended = Json::object();
    for (const auto& [pk, until] : t.suspended_until)
        suspended[pk.hex()] = until;
    return {{"delegations", delegations}, {"bootstrap", bootstrap}, {"suspended_until", suspended}};
}

} // namespace uniqueid::detail
