#include "uniqueid/protocol.hpp"

#include <algorithm>

namespace uniqueid {

bool VerifierBehavior::certify(const PersonId&, const PersonId&, bool honest_match) const
{
    return honest_match;
}

bool VerifierBehavior::ajudge_vote(const PersonId&, const PersonId&, bool honest_genuine) const
{
    return honest_genuine;
}

bool VerifierBehavior::dedup_vote(const PersonId&, const PersonId&, bool honest_duplicate) const
{
    return honest_duplicate;
}

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& detail)
{
    throw ProtocolError(code, detail);
}

const IdentityRecord& record(const ApplicationState& s, const PersonId& pk)
{
    const auto* r = s.registry.find(pk);
    if (!r) fail(ErrorCode::UnknownIdentity, pk.hex());
    return *r;
}

Json hex_list(const std::vector<PersonId>& pks)
{
    Json out = Json::array();
    for (const auto& pk : pks)
        out.push_back(pk.hex());
    return out;
}

Json sizes_json(const std::vector<std::vector<PersonId>>& groups)
{
    Json out = Json::array();
    for (const auto& g : groups)
        out.push_back(static_cast<std::int64_t>(g.size()));
    return out;
}

} // namespace

Protocol::Protocol(biometric::MatchPolicy policy) : index_(policy), behavior_(std::make_shared<VerifierBehavior>()) {}

const biometric::BiometricTemplate& Protocol::claimed_template(const PersonId& pk) const
{
    auto it = templates_.find(record(state_, pk).template_digest);
    if (it == templates_.end()) fail(ErrorCode::UnknownIdentity, "no template stored for " + pk.hex());
    return it->second;
}

void Protocol::set_behavior(std::shared_ptr<const VerifierBehavior> behavior)
{
    behavior_ = behavior ? std::move(behavior) : std::make_shared<VerifierBehavior>();
}

const Event& Protocol::commit_at(EventKind kind, Json payload, Epoch epoch)
{
    Event ev = ledger_.make_next(kind, std::move(payload), epoch);
    state_.apply(ev);
    return ledger_.push(std::move(ev));
}

const Event& Protocol::commit(EventKind kind, Json payload)
{
    return commit_at(kind, std::move(payload), state_.epoch);
}

void Protocol::index_verified(const PersonId& pk)
{
    const auto& tmpl = claimed_template(pk);
    if (!index_.contains(tmpl.digest)) index_.add(tmpl);
}

void Protocol::unindex(const PersonId& pk)
{
    index_.remove(record(state_, pk).template_digest);
}

// Genesis.

void Protocol::initialize(const ProtocolParams& params, std::uint64_t seed, const Json& info)
{
    commit_at(EventKind::GenesisParams,
              {{"params", to_json(params)},
               {"seed", seed},
               {"beacon", to_hex(beacon_genesis(seed).value)},
               {"info", info}},
              0);
}

void Protocol::allocate(const std::vector<Credit>& allocations)
{
    Json list = Json::array();
    for (const auto& a : allocations)
        list.push_back({{"pk", a.pk.hex()}, {"amount", a.amount}});
    commit(EventKind::TokensAllocated, {{"allocations", list}});
}

void Protocol::genesis_identity(const PersonId& pk, const std::string& city, const biometric::BiometricTemplate& tmpl)
{
    commit(EventKind::IdentityGenesis, {{"pk", pk.hex()}, {"city", city}, {"template_digest", to_hex(tmpl.digest)}});
    templates_[tmpl.digest] = tmpl;
    index_verified(pk);
}

void Protocol::lock_verifier_stake(const PersonId& pk)
{
    commit(EventKind::StakeLocked,
           {{"pk", pk.hex()}, {"amount", state_.params.monetary.verifier_stake}, {"reason", lock_verifier}});
}

void Protocol::register_verifier(const PersonId& pk)
{
    commit(EventKind::VerifierRegistered, {{"pk", pk.hex()}, {"city", record(state_, pk).city}});
}

void Protocol::bootstrap_trust(const PersonId& pk, std::int64_t weight)
{
    commit(EventKind::TrustBootstrapped, {{"pk", pk.hex()}, {"weight", weight}});
}

void Protocol::advance_epoch()
{
    const RandomnessBeacon next = beacon_next(state_.beacon);
    commit_at(EventKind::BeaconAdvanced, {{"round", next.round}, {"value", to_hex(next.value)}}, state_.epoch + 1);
    const auto due = state_.governance.scheduled;
    for (const auto& c : due)
        if (c.effective_epoch <= state_.epoch)
            commit(EventKind::ParameterChanged, {{"proposal", c.proposal}, {"parameter", c.parameter}, {"value", c.value}});
}

void Protocol::transfer(const PersonId& from, const PersonId& to, Amount amount)
{
    commit(EventKind::TokensTransferred, {{"from", from.hex()}, {"to", to.hex()}, {"amount", amount}});
}

void Protocol::delegate(const PersonId& from, const PersonId& to)
{
    commit(EventKind::TrustDelegated, {{"from", from.hex()}, {"to", to.hex()}});
}

// Registry.

ClaimResult Protocol::claim_identity(const PersonId& pk, const biometric::BiometricTemplate& tmpl,
                                     const std::string& city, GateKind gate, std::optional<PersonId> ref)
{
    if (state_.registry.pk_in_use(pk)) fail(ErrorCode::DuplicatePk, pk.hex());
    if (assignable_verifiers(state_, city, pk, state_.epoch).empty())
        fail(ErrorCode::NoEligibleVerifiersInCity, city);

    Json payload = {{"pk", pk.hex()},
                    {"city", city},
                    {"template_digest", to_hex(tmpl.digest)},
                    {"gate", std::string(to_string(gate))}};
    if (ref) payload["ref"] = ref->hex();
    const Amount stake = required_stake(state_, city);
    if (gate == GateKind::Stake) payload["amount"] = stake;
    commit(EventKind::IdentityClaimed, std::move(payload));
    templates_[tmpl.digest] = tmpl;
    if (gate == GateKind::Stake)
        commit(EventKind::StakeLocked, {{"pk", pk.hex()}, {"amount", stake}, {"reason", lock_entry}});

    ClaimResult result;
    result.flagged = index_.check(tmpl);
    Json flagged = Json::array();
    for (const auto& d : result.flagged)
        flagged.push_back(to_hex(d));
    commit(EventKind::DedupChecked, {{"pk", pk.hex()}, {"flagged", flagged}});
    if (result.flagged.empty()) result.assignee = assign(pk, false);
    return result;
}

bool Protocol::resolve_dedup(const PersonId& pk, const std::function<bool(const PersonId&)>& honest_duplicate)
{
    const auto& r = record(state_, pk);
    const auto panel = ajudge_panel(state_, r.city, pk, state_.epoch);
    if (panel.empty()) fail(ErrorCode::NoEligibleVerifiersInCity, r.city);
    std::int64_t votes = 0;
    for (const auto& v : panel)
        votes += behavior_->dedup_vote(v, pk, honest_duplicate(v)) ? 1 : 0;
    const auto participants = static_cast<std::int64_t>(panel.size());
    const bool duplicate = ajudge_final(votes, participants, false);
    commit(EventKind::DedupAdjudicated,
           {{"pk", pk.hex()}, {"participants", participants}, {"votes_duplicate", votes}, {"duplicate", duplicate}});
    if (duplicate) revoke(pk, "duplicate");
    else if (!assignable_verifiers(state_, r.city, pk, state_.epoch).empty()) assign(pk, false);
    return duplicate;
}

PersonId Protocol::assign(const PersonId& pk, bool reassignment)
{
    const auto& r = record(state_, pk);
    if (r.status != IdentityStatus::PendingVerification) fail(ErrorCode::NotPending, pk.hex());
    if (reassignment && !r.last_rejected_by) fail(ErrorCode::NoRejectionPending, pk.hex());
    if (reassignment && r.reassignments_used >= state_.params.max_reassignments)
        fail(ErrorCode::ReassignmentLimitReached, pk.hex());
    const auto candidates = assignable_verifiers(state_, r.city, pk, state_.epoch);
    if (candidates.empty()) fail(ErrorCode::NoEligibleVerifiersInCity, r.city);
    const PersonId v = candidates[assignment_index(state_.beacon.value, pk, r.assignment_seq, candidates.size())];
    commit(EventKind::VerifierAssigned, {{"pk", pk.hex()},
                                         {"verifier", v.hex()},
                                         {"seq", r.assignment_seq},
                                         {"round", state_.beacon.round},
                                         {"reassignment", reassignment},
                                         {"free", r.assignment_voided}});
    return v;
}

PersonId Protocol::assign_next_verifier(const PersonId& pk)
{
    return assign(pk, false);
}

PersonId Protocol::request_reassignment(const PersonId& pk)
{
    return assign(pk, true);
}

CertificateResult Protocol::submit_certificate(const PersonId& verifier, const PersonId& pk,
                                               const biometric::BiometricTemplate& presented)
{
    const auto& r = record(state_, pk);
    if (r.status != IdentityStatus::PendingVerification) fail(ErrorCode::NotPending, pk.hex());
    if (!r.current_assignee || *r.current_assignee != verifier) fail(ErrorCode::WrongVerifier, verifier.hex());
    if (r.dedup_pending) fail(ErrorCode::DedupPending, pk.hex());

    const bool honest = biometric::match_template(presented, claimed_template(pk), policy());
    CertificateResult result;
    result.accepted = behavior_->certify(verifier, pk, honest);
    commit(result.accepted ? EventKind::CertificateIssued : EventKind::CertificateRejected,
           {{"pk", pk.hex()}, {"verifier", verifier.hex()}, {"presented_digest", to_hex(presented.digest)}});
    if (!result.accepted) return result;

    if (static_cast<std::int64_t>(r.certificates.size()) >= r.certs_required) {
        commit(EventKind::IdentityVerified, {{"pk", pk.hex()}});
        if (const Amount stake = state_.tokens.lock_amount(pk, lock_entry); stake > 0)
            commit(EventKind::StakeReturned, {{"pk", pk.hex()}, {"amount", stake}, {"reason", lock_entry}});
        if (!r.minted) {
            std::vector<PersonId> verifiers;
            for (const auto& c : r.certificates)
                verifiers.push_back(c.verifier);
            Json credits = Json::array();
            for (const auto& c : verification_credits(pk, verifiers, state_.params.monetary))
                credits.push_back({{"pk", c.pk.hex()}, {"amount", c.amount}});
            commit(EventKind::TokensMinted, {{"pk", pk.hex()}, {"reason", "verification"}, {"credits", credits}});
        }
        index_verified(pk);
        result.verified = true;
    } else if (!assignable_verifiers(state_, r.city, pk, state_.epoch).empty()) {
        result.next_assignee = assign(pk, false);
    }
    return result;
}

void Protocol::revoke(const PersonId& pk, const std::string& reason)
{
    const bool was_verified = record(state_, pk).status == IdentityStatus::Verified;
    commit(EventKind::IdentityRevoked, {{"pk", pk.hex()}, {"reason", reason}});
    if (was_verified) unindex(pk);
    if (const Amount stake = state_.tokens.lock_amount(pk, lock_entry); stake > 0)
        commit(EventKind::StakeForfeited, {{"pk", pk.hex()}, {"amount", stake}, {"reason", lock_entry}});
}

void Protocol::abandon_claim(const PersonId& pk)
{
    if (record(state_, pk).status != IdentityStatus::PendingVerification) fail(ErrorCode::NotPending, pk.hex());
    revoke(pk, "rejected");
}

void Protocol::declare_trust_circle(const PersonId& pk, const std::vector<PersonId>& members)
{
    commit(EventKind::TrustCircleDeclared, {{"pk", pk.hex()}, {"members", hex_list(members)}});
}

void Protocol::recover_identity(const PersonId& pk, const PersonId& new_pk, const std::vector<PersonId>& approvals)
{
    const auto& r = record(state_, pk);
    const bool was_verified = r.status == IdentityStatus::Verified;
    const Digest digest = r.template_digest;
    commit(EventKind::IdentityRecovered, {{"pk", pk.hex()}, {"new_pk", new_pk.hex()}, {"approvals", hex_list(approvals)}});
    if (was_verified) index_.remove(digest);
}

PersonId Protocol::renewal_verifier(const PersonId& pk) const
{
    return uniqueid::renewal_verifier(state_, pk, state_.epoch);
}

bool Protocol::renew_identity(const PersonId& pk, const biometric::BiometricTemplate& presented)
{
    const auto& r = record(state_, pk);
    if (r.status == IdentityStatus::Expired || (r.expiry_epoch && state_.epoch > *r.expiry_epoch))
        fail(ErrorCode::AlreadyExpired, pk.hex());
    if (r.status != IdentityStatus::Verified) fail(ErrorCode::Unverified, pk.hex());
    const PersonId verifier = renewal_verifier(pk);
    const bool honest = biometric::match_template(presented, claimed_template(pk), policy());
    const bool accepted = behavior_->certify(verifier, pk, honest);
    Json payload = {{"pk", pk.hex()}, {"verifier", verifier.hex()}};
    if (accepted) payload["new_expiry"] = state_.epoch + state_.params.identity_ttl_epochs;
    commit(accepted ? EventKind::RenewalCertified : EventKind::RenewalRejected, std::move(payload));
    return accepted;
}

std::vector<PersonId> Protocol::expire_due()
{
    std::vector<PersonId> due;
    for (const auto& [pk, r] : state_.registry.identities)
        if (r.status == IdentityStatus::Verified && r.expiry_epoch && state_.epoch > *r.expiry_epoch) due.push_back(pk);
    for (const auto& pk : due) {
        commit(EventKind::IdentityExpired, {{"pk", pk.hex()}});
        unindex(pk);
    }
    return due;
}

std::vector<PersonId> Protocol::void_stale_assignments()
{
    std::vector<std::pair<PersonId, PersonId>> stale;
    for (const auto& [pk, r] : state_.registry.identities)
        if (r.status == IdentityStatus::PendingVerification && r.current_assignee
            && !is_eligible_verifier(state_, *r.current_assignee, state_.epoch))
            stale.emplace_back(pk, *r.current_assignee);
    std::vector<PersonId> out;
    for (const auto& [pk, v] : stale) {
        commit(EventKind::AssignmentVoided, {{"pk", pk.hex()}, {"verifier", v.hex()}});
        out.push_back(pk);
    }
    return out;
}

// Audit.

std::int64_t Protocol::call_ajudge(const PersonId& caller, const PersonId& target)
{
    const auto id = state_.audit.next_id;
    commit(EventKind::AJudgeCalled, {{"id", id},
                                     {"caller", caller.hex()},
                                     {"target", target.hex()},
                                     {"system", false},
                                     {"deadline", state_.epoch + state_.params.ajudge_deadline_epochs}});
    return id;
}

std::int64_t Protocol::random_check(const PersonId& target)
{
    const auto id = state_.audit.next_id;
    commit(EventKind::AJudgeCalled, {{"id", id},
                                     {"caller", system_account.hex()},
                                     {"target", target.hex()},
                                     {"system", true},
                                     {"deadline", state_.epoch + state_.params.ajudge_deadline_epochs}});
    return id;
}

AJudgeVerdict Protocol::adjudicate(std::int64_t call_id, const PresentFn& present)
{
    auto it = state_.audit.calls.find(call_id);
    if (it == state_.audit.calls.end() || it->second.outcome) fail(ErrorCode::InvalidEvent, "no open audit call");
    const AuditCall call = it->second;
    if (state_.epoch > call.deadline_epoch) fail(ErrorCode::DeadlinePassed, std::to_string(call_id));
    const auto& target = record(state_, call.target);
    const auto panel = ajudge_panel(state_, target.city, call.target, state_.epoch);
    if (panel.empty()) fail(ErrorCode::NoEligibleVerifiersInCity, target.city);

    AJudgeVerdict verdict;
    verdict.call_id = call_id;
    verdict.target = call.target;
    const auto& claimed = claimed_template(call.target);
    std::int64_t genuine = 0;
    Json verdicts = Json::object();
    for (const auto& v : panel) {
        const bool honest = biometric::match_template(present(v), claimed, policy());
        const bool vote = behavior_->ajudge_vote(v, call.target, honest);
        verdict.per_verifier[v] = vote;
        verdicts[v.hex()] = vote;
        genuine += vote ? 1 : 0;
    }
    verdict.genuine = ajudge_final(genuine, static_cast<std::int64_t>(panel.size()), state_.params.ajudge_unanimous);
    verdict.outcome = verdict.genuine ? AuditOutcome::PassedGenuine : AuditOutcome::FailedFake;
    commit(EventKind::AJudgeAdjudicated, {{"id", call_id},
                                          {"target", call.target.hex()},
                                          {"outcome", std::string(to_string(verdict.outcome))},
                                          {"verdicts", verdicts}});
    return verdict;
}

std::vector<std::int64_t> Protocol::miss_deadlines()
{
    std::vector<std::int64_t> due;
    for (const auto& [id, c] : state_.audit.calls)
        if (!c.outcome && state_.epoch > c.deadline_epoch) due.push_back(id);
    for (auto id : due)
        commit(EventKind::AJudgeAdjudicated, {{"id", id},
                                              {"target", state_.audit.calls.at(id).target.hex()},
                                              {"outcome", std::string(to_string(AuditOutcome::MissedDeadline))},
                                              {"verdicts", Json::object()}});
    return due;
}

Settlement Protocol::settle_audit(std::int64_t call_id)
{
    const AuditCall call = state_.audit.calls.at(call_id);
    Settlement out;
    out.target = call.target;
    out.beneficiary = call.caller;
    if (!call.outcome || *call.outcome == AuditOutcome::PassedGenuine) return out;

    std::vector<PersonId> certifiers;
    if (const auto* r = state_.registry.find(call.target))
        for (const auto& c : r->certificates)
            certifiers.push_back(c.verifier);
    for (const auto& v : certifiers) {
        auto slash = state_.audit.slash_due.find(v);
        if (slash != state_.audit.slash_due.end() && slash->second == call_id) {
            const Amount amount = state_.tokens.lock_amount(v, lock_verifier);
            commit(EventKind::StakeSlashed,
                   {{"pk", v.hex()}, {"beneficiary", call.caller.hex()}, {"amount", amount}, {"call", call_id}});
            out.slashed.push_back({v, amount});
        }
        auto susp = state_.audit.suspension_due.find(v);
        if (susp != state_.audit.suspension_due.end() && susp->second == call_id) {
            commit(EventKind::TrustSuspended,
                   {{"pk", v.hex()}, {"until", state_.epoch + state_.params.suspension_epochs}, {"call", call_id}});
            out.suspended.push_back(v);
        }
    }
    if (auto due = state_.audit.revocation_due.find(call.target); due != state_.audit.revocation_due.end())
        revoke(call.target, due->second == AuditOutcome::FailedFake ? "failed_fake" : "missed_deadline");
    void_stale_assignments();
    return out;
}

std::vector<PersonId> Protocol::settle_rewards()
{
    std::vector<PersonId> out;
    const auto due = state_.audit.reward_due;
    for (const auto& pk : due) {
        if (!state_.registry.find(pk)) continue;
        commit(EventKind::TokensMinted,
               {{"pk", pk.hex()},
                {"reason", "ajudge_reward"},
                {"credits", Json::array({{{"pk", pk.hex()}, {"amount", state_.params.monetary.ajudge_reward}}})}});
        out.push_back(pk);
    }
    return out;
}

// Governance.

std::size_t Protocol::form_communities()
{
    std::vector<governance::CityMember> verified;
    for (const auto& [pk, r] : state_.registry.identities)
        if (r.status == IdentityStatus::Verified) verified.push_back({r.city, pk});
    const auto groups = governance::form_communities(std::move(verified), state_.params.community);
    commit(EventKind::CommunitiesFormed, {{"round", state_.governance.round + 1},
                                          {"sizes", sizes_json(groups)},
                                          {"digest", to_hex(governance::membership_digest(groups))}});
    return groups.size();
}

std::size_t Protocol::form_layer(int layer)
{
    if (layer < 2 || layer > 3) fail(ErrorCode::InvalidEvent, "layers 2 and 3 are formed from representatives");
    const auto& bounds = layer == 2 ? state_.params.layer2_group : state_.params.layer3_group;
    const auto groups = governance::form_layer(state_.governance.representatives(layer - 2), bounds);
    commit(EventKind::LayerFormed, {{"layer", layer},
                                    {"sizes", sizes_json(groups)},
                                    {"digest", to_hex(governance::membership_digest(groups))}});
    return groups.size();
}

governance::Election Protocol::elect(int layer, std::size_t group)
{
    if (layer < 1 || layer > 3) fail(ErrorCode::InvalidEvent, "layer must be 1, 2 or 3");
    const auto& groups = state_.governance.layers[static_cast<std::size_t>(layer - 1)];
    if (group >= groups.size()) fail(ErrorCode::InvalidEvent, "no such group");
    const auto e = expected_election(state_, layer - 1, groups[group]);
    commit(EventKind::RepresentativeElected, {{"layer", layer},
                                              {"group", static_cast<std::int64_t>(group)},
                                              {"pk", e.representative.hex()},
                                              {"support", e.support}});
    return e;
}

void Protocol::invalidate(int layer, std::size_t group)
{
    if (layer < 1 || layer > 3) fail(ErrorCode::InvalidEvent, "layer must be 1, 2 or 3");
    const auto& groups = state_.governance.layers[static_cast<std::size_t>(layer - 1)];
    if (group >= groups.size() || !groups[group].representative) fail(ErrorCode::InvalidEvent, "no representative");
    commit(EventKind::RepresentativeInvalidated, {{"layer", layer},
                                                  {"group", static_cast<std::int64_t>(group)},
                                                  {"pk", groups[group].representative->hex()},
                                                  {"support", current_support(state_, groups[group])}});
}

std::int64_t Protocol::open_proposal(const PersonId& opener, const std::string& importance_class,
                                     const std::string& parameter, std::int64_t value)
{
    const auto id = static_cast<std::int64_t>(state_.governance.proposals.size()) + 1;
    commit(EventKind::ProposalOpened, {{"id", id},
                                       {"class", importance_class},
                                       {"parameter", parameter},
                                       {"value", value},
                                       {"opener", opener.hex()}});
    return id;
}

governance::ProposalStatus Protocol::tally_proposal(std::int64_t id,
                                                    const std::array<governance::LayerBallots, 3>& ballots)
{
    auto it = state_.governance.proposals.find(id);
    if (it == state_.governance.proposals.end()) fail(ErrorCode::InvalidEvent, "no such proposal");
    const bool empty = std::any_of(ballots.begin(), ballots.end(), [](const auto& b) { return b.total() == 0; });
    const auto status = empty ? governance::ProposalStatus::Failed : governance::tally(ballots, it->second.thresholds);
    Json layers = Json::array();
    for (const auto& b : ballots)
        layers.push_back({{"approvals", b.approvals}, {"rejections", b.rejections}, {"abstentions", b.abstentions}});
    commit(EventKind::ProposalTallied, {{"id", id},
                                        {"layers", layers},
                                        {"status", std::string(governance::to_string(status))},
                                        {"layers_empty", empty}});
    return status;
}

} // namespace uniqueid
