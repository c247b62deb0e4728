#include "apply_internal.hpp"

#include <algorithm>
#include <set>

namespace uniqueid {

std::string_view to_string(IdentityStatus s)
{
    switch (s) {
    case IdentityStatus::PendingEntry: return "PendingEntry";
    case IdentityStatus::PendingVerification: return "PendingVerification";
    case IdentityStatus::Verified: return "Verified";
    case IdentityStatus::Revoked: return "Revoked";
    case IdentityStatus::Expired: return "Expired";
    }
    return "Unknown";
}

std::string_view to_string(GateKind g)
{
    switch (g) {
    case GateKind::Genesis: return "genesis";
    case GateKind::Invitation: return "invitation";
    case GateKind::Stake: return "stake";
    case GateKind::VerifierSponsor: return "sponsor";
    case GateKind::Recovery: return "recovery";
    }
    return "unknown";
}

std::optional<GateKind> gate_kind_from_string(std::string_view s)
{
    for (auto g : {GateKind::Genesis, GateKind::Invitation, GateKind::Stake, GateKind::VerifierSponsor,
                   GateKind::Recovery})
        if (to_string(g) == s) return g;
    return std::nullopt;
}

RandomnessBeacon beacon_genesis(std::uint64_t seed)
{
    std::string bytes;
    append_be64(bytes, seed);
    return {0, sha256(bytes)};
}

RandomnessBeacon beacon_next(const RandomnessBeacon& beacon)
{
    std::string bytes(beacon.value.begin(), beacon.value.end());
    append_be64(bytes, beacon.round + 1);
    return {beacon.round + 1, sha256(bytes)};
}

std::uint64_t assignment_index(const Digest& beacon_value, const PersonId& pk, std::uint64_t seq, std::uint64_t n)
{
    std::string bytes(beacon_value.begin(), beacon_value.end());
    bytes.append(pk.bytes.begin(), pk.bytes.end());
    append_be64(bytes, seq);
    const Digest h = sha256(bytes);
    return read_be64(h) % n;
}

Json to_json(const IdentityRecord& r)
{
    Json certs = Json::array();
    for (const auto& c : r.certificates)
        certs.push_back({{"verifier", c.verifier.hex()}, {"epoch", c.epoch}});
    Json circle = Json::array();
    for (const auto& m : r.trust_circle)
        circle.push_back(m.hex());
    Json gate = {{"kind", std::string(to_string(r.entry_gate.kind))}, {"amount", r.entry_gate.amount}};
    gate["ref"] = r.entry_gate.ref ? Json(r.entry_gate.ref->hex()) : Json(nullptr);
    return {
        {"pk", r.pk.hex()},
        {"template_digest", to_hex(r.template_digest)},
        {"city", r.city},
        {"status", std::string(to_string(r.status))},
        {"entry_gate", gate},
        {"certificates", certs},
        {"assignment_seq", r.assignment_seq},
        {"current_assignee", r.current_assignee ? Json(r.current_assignee->hex()) : Json(nullptr)},
        {"last_rejected_by", r.last_rejected_by ? Json(r.last_rejected_by->hex()) : Json(nullptr)},
        {"reassignments_used", r.reassignments_used},
        {"assignment_voided", r.assignment_voided},
        {"certs_required", r.certs_required},
        {"dedup_pending", r.dedup_pending},
        {"minted", r.minted},
        {"invitations_remaining", r.invitations_remaining},
        {"trust_circle", circle},
        {"claimed_epoch", r.claimed_epoch},
        {"verified_epoch", r.verified_epoch ? Json(*r.verified_epoch) : Json(nullptr)},
        {"expiry_epoch", r.expiry_epoch ? Json(*r.expiry_epoch) : Json(nullptr)},
        {"revocation_reason", r.revocation_reason},
    };
}

bool is_eligible_verifier(const ApplicationState& s, const PersonId& pk, Epoch epoch)
{
    auto v = s.registry.verifiers.find(pk);
    if (v == s.registry.verifiers.end() || !s.registry.is_verified(pk)) return false;
    return s.trust.weight(pk) >= s.params.trust_threshold_for(v->second.city)
        && s.tokens.lock_amount(pk, lock_verifier) == s.params.monetary.verifier_stake && !s.trust.suspended(pk, epoch);
}

std::vector<PersonId> ajudge_panel(const ApplicationState& s, const std::string& city, const PersonId& subject,
                                   Epoch epoch)
{
    std::vector<PersonId> out;
    auto it = s.registry.city_verifiers.find(city);
    if (it == s.registry.city_verifiers.end()) return out;
    for (const auto& v : it->second) // std::set: ascending pk
        if (v != subject && is_eligible_verifier(s, v, epoch)) out.push_back(v);
    return out;
}

std::vector<PersonId> assignable_verifiers(const ApplicationState& s, const std::string& city, const PersonId& subject,
                                           Epoch epoch)
{
    auto out = ajudge_panel(s, city, subject, epoch);
    if (const auto* r = s.registry.find(subject))
        std::erase_if(out, [&](const PersonId& v) { return r->has_certificate_from(v); });
    return out;
}

Amount required_stake(const ApplicationState& s, const std::string& city)
{
    auto it = s.registry.pending_stake_claims.find(city);
    const std::int64_t pending = it == s.registry.pending_stake_claims.end() ? 0 : it->second;
    return s.params.monetary.base_stake * (1 + pending);
}

std::int64_t invitations_remaining(const ApplicationState& s, const PersonId& pk)
{
    const auto* r = s.registry.find(pk);
    return r && r->status == IdentityStatus::Verified ? r->invitations_remaining : 0;
}

std::int64_t sponsor_quota_remaining(const ApplicationState& s, const PersonId& pk, Epoch epoch)
{
    auto v = s.registry.verifiers.find(pk);
    if (v == s.registry.verifiers.end()) return 0;
    const std::int64_t window = epoch / s.params.sponsor_window_epochs;
    return std::max<std::int64_t>(0, s.params.sponsor_quota - v->second.sponsor.used_in(window));
}

Json registry_dump(const ApplicationState& s)
{
    Json out = Json::array();
    for (const auto& [pk, r] : s.registry.identities)
        out.push_back(to_json(r));
    return out;
}

namespace detail {

void leave_verified(ApplicationState& s, IdentityRecord& r)
{
    s.trust.withdraw(r.pk);
}

namespace {

IdentityRecord& pending_identity(ApplicationState& s, const PersonId& pk)
{
    auto& r = identity(s, pk);
    if (r.status != IdentityStatus::PendingVerification) reject(ErrorCode::NotPending, pk.hex());
    return r;
}

void release_pending_stake_slot(ApplicationState& s, const IdentityRecord& r)
{
    if (r.entry_gate.kind == GateKind::Stake && r.status == IdentityStatus::PendingVerification)
        --s.registry.pending_stake_claims[r.city];
}

const PersonId& assigned_verifier(const IdentityRecord& r, const PersonId& verifier)
{
    if (!r.current_assignee || *r.current_assignee != verifier) reject(ErrorCode::WrongVerifier, verifier.hex());
    return *r.current_assignee;
}

} // namespace

PersonId renewal_assignee(const ApplicationState& s, const IdentityRecord& r, Epoch epoch)
{
    const auto panel = ajudge_panel(s, r.city, r.pk, epoch);
    if (panel.empty()) reject(ErrorCode::NoEligibleVerifiersInCity, r.city);
    return panel[assignment_index(s.beacon.value, r.pk, r.assignment_seq, panel.size())];
}

namespace {

void apply_genesis_identity(ApplicationState& s, const Event& ev)
{
    if (!s.genesis_open) reject(ErrorCode::InvalidEvent, "genesis identities only before the first epoch");
    const PersonId pk = field_pk(ev.payload, "pk");
    if (s.registry.pk_in_use(pk)) reject(ErrorCode::DuplicatePk, pk.hex());
    IdentityRecord r;
    r.pk = pk;
    r.template_digest = field_digest(ev.payload, "template_digest");
    r.city = field_str(ev.payload, "city");
    r.status = IdentityStatus::Verified;
    r.entry_gate = {GateKind::Genesis, std::nullopt, 0};
    r.certs_required = s.params.certs_required;
    r.minted = true; // genesis identities are covered by the ICO, not by issuance
    r.invitations_remaining = s.params.invitations_per_user;
    r.claimed_epoch = ev.epoch;
    r.verified_epoch = ev.epoch;
    r.expiry_epoch = ev.epoch + s.params.identity_ttl_epochs;
    s.registry.identities.emplace(pk, std::move(r));
    ++s.registry.claims_total;
}

void apply_verifier_registered(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    const auto& r = identity(s, pk);
    if (r.status != IdentityStatus::Verified) reject(ErrorCode::Unverified, pk.hex());
    if (field_str(ev.payload, "city") != r.city) reject(ErrorCode::InvalidEvent, "verifier city differs from identity");
    if (s.registry.verifiers.count(pk)) reject(ErrorCode::InvalidEvent, "already a verifier");
    if (s.tokens.lock_amount(pk, lock_verifier) != s.params.monetary.verifier_stake)
        reject(ErrorCode::NoActiveLock, "verifier stake not locked");
    s.registry.verifiers[pk] = VerifierRecord{pk, r.city, {}};
    s.registry.city_verifiers[r.city].insert(pk);
}

void apply_claimed(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    if (s.registry.pk_in_use(pk)) reject(ErrorCode::DuplicatePk, pk.hex());
    const std::string& city = field_str(ev.payload, "city");
    const Digest template_digest = field_digest(ev.payload, "template_digest");
    auto gate_kind = gate_kind_from_string(field_str(ev.payload, "gate"));
    if (!gate_kind) reject(ErrorCode::InvalidEvent, "unknown gate");

    EntryGate gate{*gate_kind, std::nullopt, 0};
    switch (*gate_kind) {
    case GateKind::Invitation: {
        const PersonId inviter = field_pk(ev.payload, "ref");
        if (invitations_remaining(s, inviter) < 1)
            reject(ErrorCode::GateUnsatisfied, "inviter has no invitations left or is not verified");
        gate.ref = inviter;
        identity(s, inviter).invitations_remaining -= 1;
        break;
    }
    case GateKind::Stake: {
        const Amount amount = field_int(ev.payload, "amount");
        const Amount required = required_stake(s, city);
        if (amount != required)
            reject(ErrorCode::GateUnsatisfied, "stake must be " + std::to_string(required) + " in " + city);
        if (s.tokens.balance(pk) < amount) reject(ErrorCode::GateUnsatisfied, "balance below required stake");
        gate.amount = amount;
        ++s.registry.pending_stake_claims[city];
        break;
    }
    case GateKind::VerifierSponsor: {
        const PersonId sponsor = field_pk(ev.payload, "ref");
        if (!is_eligible_verifier(s, sponsor, ev.epoch) || sponsor_quota_remaining(s, sponsor, ev.epoch) < 1)
            reject(ErrorCode::GateUnsatisfied, "sponsor is not eligible or has no quota left");
        gate.ref = sponsor;
        s.registry.verifiers[sponsor].sponsor.consume(ev.epoch / s.params.sponsor_window_epochs);
        break;
    }
    default: reject(ErrorCode::InvalidEvent, "gate not allowed for claims");
    }

    IdentityRecord r;
    r.pk = pk;
    r.template_digest = template_digest;
    r.city = city;
    r.status = IdentityStatus::PendingVerification;
    r.entry_gate = gate;
    r.certs_required = s.params.certs_required;
    r.claimed_epoch = ev.epoch;
    s.registry.identities.emplace(pk, std::move(r));
    ++s.registry.claims_total;
}

void apply_dedup_checked(ApplicationState& s, const Event& ev)
{
    auto& r = pending_identity(s, field_pk(ev.payload, "pk"));
    const auto& flagged = field_array(ev.payload, "flagged");
    for (const auto& f : flagged)
        if (!f.is_string() || !digest_from_hex(f.get<std::string>())) reject(ErrorCode::InvalidEvent, "bad digest");
    r.dedup_pending = !flagged.empty();
}

void apply_dedup_adjudicated(ApplicationState& s, const Event& ev)
{
    auto& r = pending_identity(s, field_pk(ev.payload, "pk"));
    if (!r.dedup_pending) reject(ErrorCode::InvalidEvent, "no dedup flag to adjudicate");
    const auto participants = field_int(ev.payload, "participants");
    const auto votes = field_int(ev.payload, "votes_duplicate");
    if (participants != static_cast<std::int64_t>(ajudge_panel(s, r.city, r.pk, ev.epoch).size()) || votes < 0
        || votes > participants)
        reject(ErrorCode::InvalidEvent, "dedup panel does not match eligible city verifiers");
    if (field_bool(ev.payload, "duplicate") != ajudge_final(votes, participants, false))
        reject(ErrorCode::InvalidEvent, "dedup verdict inconsistent with votes");
    r.dedup_pending = false;
}

void apply_assigned(ApplicationState& s, const Event& ev)
{
    auto& r = pending_identity(s, field_pk(ev.payload, "pk"));
    if (r.current_assignee) reject(ErrorCode::InvalidEvent, "an assignment is still unresolved");
    if (r.dedup_pending) reject(ErrorCode::DedupPending, r.pk.hex());
    const bool reassignment = field_bool(ev.payload, "reassignment");
    const bool free = field_bool(ev.payload, "free");
    if (free && !r.assignment_voided) reject(ErrorCode::InvalidEvent, "no voided assignment to replace");
    if (reassignment && !r.last_rejected_by) reject(ErrorCode::NoRejectionPending, r.pk.hex());
    if (!reassignment && !free && (r.last_rejected_by || r.assignment_voided))
        reject(ErrorCode::InvalidEvent, "a rejected or voided assignment needs a reassignment");
    if (reassignment && r.reassignments_used >= s.params.max_reassignments)
        reject(ErrorCode::ReassignmentLimitReached, r.pk.hex());
    if (static_cast<std::uint64_t>(field_int(ev.payload, "seq")) != r.assignment_seq
        || static_cast<std::uint64_t>(field_int(ev.payload, "round")) != s.beacon.round)
        reject(ErrorCode::InvalidEvent, "assignment seq or beacon round mismatch");

    const auto candidates = assignable_verifiers(s, r.city, r.pk, ev.epoch);
    if (candidates.empty()) reject(ErrorCode::NoEligibleVerifiersInCity, r.city);
    const PersonId& expected = candidates[assignment_index(s.beacon.value, r.pk, r.assignment_seq, candidates.size())];
    if (field_pk(ev.payload, "verifier") != expected) reject(ErrorCode::WrongVerifier, "assignment does not match beacon");

    if (reassignment) ++r.reassignments_used;
    r.last_rejected_by.reset();
    r.assignment_voided = false;
    r.current_assignee = expected;
    ++r.assignment_seq;
}

void apply_voided(ApplicationState& s, const Event& ev)
{
    auto& r = pending_identity(s, field_pk(ev.payload, "pk"));
    const PersonId verifier = field_pk(ev.payload, "verifier");
    assigned_verifier(r, verifier);
    if (is_eligible_verifier(s, verifier, ev.epoch))
        reject(ErrorCode::InvalidEvent, "only assignments to ineligible verifiers can be voided");
    r.current_assignee.reset();
    r.assignment_voided = true;
}

void apply_certificate(ApplicationState& s, const Event& ev, bool accepted)
{
    auto& r = pending_identity(s, field_pk(ev.payload, "pk"));
    const PersonId verifier = field_pk(ev.payload, "verifier");
    assigned_verifier(r, verifier);
    if (r.dedup_pending) reject(ErrorCode::DedupPending, r.pk.hex());
    r.current_assignee.reset();
    if (accepted) r.certificates.push_back({verifier, ev.epoch});
    else r.last_rejected_by = verifier;
}

void apply_verified(ApplicationState& s, const Event& ev)
{
    auto& r = pending_identity(s, field_pk(ev.payload, "pk"));
    if (static_cast<std::int64_t>(r.certificates.size()) < r.certs_required || r.current_assignee || r.dedup_pending)
        reject(ErrorCode::InvalidEvent, "not enough certificates");
    release_pending_stake_slot(s, r);
    r.status = IdentityStatus::Verified;
    r.verified_epoch = ev.epoch;
    r.expiry_epoch = ev.epoch + s.params.identity_ttl_epochs;
    r.invitations_remaining = s.params.invitations_per_user;
}

void apply_revoked(ApplicationState& s, const Event& ev)
{
    auto& r = identity(s, field_pk(ev.payload, "pk"));
    const std::string& reason = field_str(ev.payload, "reason");
    if (reason == "rejected" || reason == "duplicate") {
        if (r.status != IdentityStatus::PendingVerification) reject(ErrorCode::NotPending, r.pk.hex());
        if (reason == "duplicate" && r.dedup_pending) reject(ErrorCode::DedupPending, "adjudicate the flag first");
    } else if (reason == "failed_fake" || reason == "missed_deadline") {
        auto due = s.audit.revocation_due.find(r.pk);
        const auto expected = reason == "failed_fake" ? AuditOutcome::FailedFake : AuditOutcome::MissedDeadline;
        if (due == s.audit.revocation_due.end() || due->second != expected)
            reject(ErrorCode::InvalidEvent, "no audit outcome requires this revocation");
        s.audit.revocation_due.erase(due);
    } else {
        reject(ErrorCode::InvalidEvent, "unknown revocation reason " + reason);
    }
    if (r.status == IdentityStatus::Verified) leave_verified(s, r);
    release_pending_stake_slot(s, r);
    r.status = IdentityStatus::Revoked;
    r.current_assignee.reset();
    r.revocation_reason = reason;
}

void apply_trust_circle(ApplicationState& s, const Event& ev)
{
    auto& r = identity(s, field_pk(ev.payload, "pk"));
    if (r.status != IdentityStatus::Verified) reject(ErrorCode::Unverified, r.pk.hex());
    std::vector<PersonId> members;
    std::set<PersonId> seen;
    for (const auto& m : field_array(ev.payload, "members")) {
        auto pk = m.is_string() ? PersonId::parse(m.get<std::string>()) : std::nullopt;
        if (!pk) reject(ErrorCode::InvalidEvent, "bad member key");
        if (*pk == r.pk) reject(ErrorCode::InvalidEvent, "trust circle may not include its owner");
        if (!seen.insert(*pk).second) reject(ErrorCode::InvalidEvent, "duplicate trust circle member");
        if (!s.registry.is_verified(*pk)) reject(ErrorCode::UnverifiedMember, pk->hex());
        members.push_back(*pk);
    }
    if (members.size() < 5) reject(ErrorCode::TooFewMembers, std::to_string(members.size()) + " < 5");
    r.trust_circle = std::move(members);
}

void apply_recovered(ApplicationState& s, const Event& ev)
{
    const PersonId old_pk = field_pk(ev.payload, "pk");
    const PersonId new_pk = field_pk(ev.payload, "new_pk");
    auto& r = identity(s, old_pk);
    if (r.status != IdentityStatus::Verified && r.status != IdentityStatus::Expired)
        reject(ErrorCode::InvalidEvent, "only verified or expired identities can be recovered");
    std::set<PersonId> approvers;
    for (const auto& a : field_array(ev.payload, "approvals")) {
        auto pk = a.is_string() ? PersonId::parse(a.get<std::string>()) : std::nullopt;
        if (!pk || std::find(r.trust_circle.begin(), r.trust_circle.end(), *pk) == r.trust_circle.end())
            reject(ErrorCode::InsufficientApprovals, "approval from outside the trust circle");
        approvers.insert(*pk);
    }
    if (r.trust_circle.empty() || approvers.size() < recovery_quorum(r.trust_circle.size()))
        reject(ErrorCode::InsufficientApprovals,
               std::to_string(approvers.size()) + " of " + std::to_string(r.trust_circle.size()));
    if (s.registry.pk_in_use(new_pk)) reject(ErrorCode::PkInUse, new_pk.hex());

    if (r.status == IdentityStatus::Verified) leave_verified(s, r);
    IdentityRecord next = std::move(r);
    s.registry.identities.erase(old_pk);
    s.registry.retired.insert(old_pk);
    if (auto v = s.registry.verifiers.find(old_pk); v != s.registry.verifiers.end()) {
        s.registry.city_verifiers[v->second.city].erase(old_pk);
        s.registry.verifiers.erase(v);
    }
    next.pk = new_pk;
    next.status = IdentityStatus::PendingVerification;
    next.entry_gate = {GateKind::Recovery, old_pk, 0};
    next.certificates.clear();
    next.current_assignee.reset();
    next.last_rejected_by.reset();
    next.assignment_voided = false;
    next.reassignments_used = 0;
    next.certs_required = s.params.certs_required;
    next.dedup_pending = false;
    next.claimed_epoch = ev.epoch;
    next.verified_epoch.reset();
    next.expiry_epoch.reset();
    s.registry.identities.emplace(new_pk, std::move(next));
}

void apply_renewal(ApplicationState& s, const Event& ev, bool accepted)
{
    auto& r = identity(s, field_pk(ev.payload, "pk"));
    if (r.status == IdentityStatus::Expired || (r.expiry_epoch && ev.epoch > *r.expiry_epoch))
        reject(ErrorCode::AlreadyExpired, r.pk.hex());
    if (r.status != IdentityStatus::Verified) reject(ErrorCode::Unverified, r.pk.hex());
    if (field_pk(ev.payload, "verifier") != renewal_assignee(s, r, ev.epoch))
        reject(ErrorCode::WrongVerifier, "renewal verifier does not match beacon");
    if (accepted) {
        const Epoch new_expiry = ev.epoch + s.params.identity_ttl_epochs;
        if (field_int(ev.payload, "new_expiry") != new_expiry) reject(ErrorCode::InvalidEvent, "wrong new expiry");
        r.expiry_epoch = new_expiry;
    }
    ++r.assignment_seq;
}

void apply_expired(ApplicationState& s, const Event& ev)
{
    auto& r = identity(s, field_pk(ev.payload, "pk"));
    if (r.status != IdentityStatus::Verified || !r.expiry_epoch || ev.epoch <= *r.expiry_epoch)
        reject(ErrorCode::InvalidEvent, "identity is not past its expiry");
    leave_verified(s, r);
    r.status = IdentityStatus::Expired;
}

} // namespace

bool apply_registry_event(ApplicationState& s, const Event& ev)
{
    switch (ev.kind) {
    case EventKind::IdentityGenesis: apply_genesis_identity(s, ev); return true;
    case EventKind::VerifierRegistered: apply_verifier_registered(s, ev); return true;
    case EventKind::IdentityClaimed: apply_claimed(s, ev); return true;
    case EventKind::DedupChecked: apply_dedup_checked(s, ev); return true;
    case EventKind::DedupAdjudicated: apply_dedup_adjudicated(s, ev); return true;
    case EventKind::VerifierAssigned: apply_assigned(s, ev); return true;
    case EventKind::AssignmentVoided: apply_voided(s, ev); return true;
    case EventKind::CertificateIssued: apply_certificate(s, ev, true); return true;
    case EventKind::CertificateRejected: apply_certificate(s, ev, false); return true;
    case EventKind::IdentityVerified: apply_verified(s, ev); return true;
    case EventKind::IdentityRevoked: apply_revoked(s, ev); return true;
    case EventKind::TrustCircleDeclared: apply_trust_circle(s, ev); return true;
    case EventKind::IdentityRecovered: apply_recovered(s, ev); return true;
    case EventKind::RenewalCertified: apply_renewal(s, ev, true); return true;
    case EventKind::RenewalRejected: apply_renewal(s, ev, false); return true;
    case EventKind::IdentityExpired: apply_expired(s, ev); return true;
    default: return false;
    }
}

} // namespace detail

PersonId renewal_verifier(const ApplicationState& s, const PersonId& pk, Epoch epoch)
{
    return detail::renewal_assignee(s, detail::identity(s, pk), epoch);
}

} // namespace uniqueid
