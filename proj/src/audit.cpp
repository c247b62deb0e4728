#include "apply_internal.hpp"

namespace uniqueid {

std::string_view to_string(AuditOutcome o)
{
    switch (o) {
    case AuditOutcome::PassedGenuine: return "PassedGenuine";
    case AuditOutcome::FailedFake: return "FailedFake";
    case AuditOutcome::MissedDeadline: return "MissedDeadline";
    }
    return "Unknown";
}

std::optional<AuditOutcome> audit_outcome_from_string(std::string_view s)
{
    for (auto o : {AuditOutcome::PassedGenuine, AuditOutcome::FailedFake, AuditOutcome::MissedDeadline})
        if (to_string(o) == s) return o;
    return std::nullopt;
}

bool ajudge_final(std::int64_t genuine_votes, std::int64_t participants, bool unanimous)
{
    if (participants <= 0) return false;
    return unanimous ? genuine_votes == participants : 2 * genuine_votes > participants;
}

std::int64_t recheck_quota_remaining(const ApplicationState& s, const PersonId& pk, Epoch epoch)
{
    const std::int64_t window = epoch / s.params.quota_window_epochs;
    auto it = s.audit.recheck.find(pk);
    const std::int64_t used = it == s.audit.recheck.end() ? 0 : it->second.used_in(window);
    return std::max<std::int64_t>(0, s.params.recheck_quota - used);
}

namespace detail {

namespace {

AuditCall& open_call(ApplicationState& s, std::int64_t id)
{
    auto it = s.audit.calls.find(id);
    if (it == s.audit.calls.end() || it->second.outcome) reject(ErrorCode::InvalidEvent, "no open audit call");
    return it->second;
}

void apply_called(ApplicationState& s, const Event& ev)
{
    const auto id = field_int(ev.payload, "id");
    if (id != s.audit.next_id) reject(ErrorCode::InvalidEvent, "audit ids are sequential");
    const PersonId caller = field_pk(ev.payload, "caller");
    const PersonId target = field_pk(ev.payload, "target");
    const bool system = field_bool(ev.payload, "system");
    if (!s.registry.is_verified(target)) reject(ErrorCode::TargetNotVerified, target.hex());
    if (s.audit.open_by_target.count(target)) reject(ErrorCode::InvalidEvent, "target already under audit");
    if (system) {
        if (caller != system_account) reject(ErrorCode::NotAuthorized, "random checks come from the system account");
    } else {
        if (caller == target) reject(ErrorCode::NotAuthorized, "self audit");
        if (!is_eligible_verifier(s, caller, ev.epoch) && !s.governance.is_representative(2, caller))
            reject(ErrorCode::NotAuthorized, caller.hex());
        if (recheck_quota_remaining(s, caller, ev.epoch) < 1) reject(ErrorCode::QuotaExhausted, caller.hex());
    }
    const Epoch deadline = ev.epoch + s.params.ajudge_deadline_epochs;
    if (field_int(ev.payload, "deadline") != deadline) reject(ErrorCode::InvalidEvent, "wrong deadline");

    if (!system) s.audit.recheck[caller].consume(ev.epoch / s.params.quota_window_epochs);
    s.audit.calls[id] = AuditCall{id, caller, target, system, ev.epoch, deadline, std::nullopt};
    s.audit.open_by_target[target] = id;
    ++s.audit.next_id;
    ++s.audit.stats.calls_opened;
}

void apply_adjudicated(ApplicationState& s, const Event& ev)
{
    auto& call = open_call(s, field_int(ev.payload, "id"));
    auto outcome = audit_outcome_from_string(field_str(ev.payload, "outcome"));
    if (!outcome) reject(ErrorCode::InvalidEvent, "unknown audit outcome");
    const Json& verdicts = ev.payload.contains("verdicts") ? ev.payload["verdicts"] : Json();
    if (!verdicts.is_object()) reject(ErrorCode::InvalidEvent, "verdicts must be an object");

    if (*outcome == AuditOutcome::MissedDeadline) {
        if (ev.epoch <= call.deadline_epoch) reject(ErrorCode::InvalidEvent, "deadline not yet passed");
        if (!verdicts.empty()) reject(ErrorCode::InvalidEvent, "no verdicts after a missed deadline");
    } else {
        if (ev.epoch > call.deadline_epoch) reject(ErrorCode::DeadlinePassed, std::to_string(call.id));
        const auto& target = identity(s, call.target);
        const auto panel = ajudge_panel(s, target.city, call.target, ev.epoch);
        if (panel.empty()) reject(ErrorCode::NoEligibleVerifiersInCity, target.city);
        if (verdicts.size() != panel.size()) reject(ErrorCode::InvalidEvent, "every eligible city verifier votes");
        std::int64_t genuine = 0;
        for (const auto& v : panel) {
            auto it = verdicts.find(v.hex());
            if (it == verdicts.end() || !it->is_boolean()) reject(ErrorCode::InvalidEvent, "missing verdict");
            genuine += it->get<bool>() ? 1 : 0;
        }
        const bool final = ajudge_final(genuine, static_cast<std::int64_t>(panel.size()), s.params.ajudge_unanimous);
        if (final != (*outcome == AuditOutcome::PassedGenuine))
            reject(ErrorCode::InvalidEvent, "outcome inconsistent with verdicts");
    }

    call.outcome = outcome;
    s.audit.open_by_target.erase(call.target);
    switch (*outcome) {
    case AuditOutcome::PassedGenuine:
        s.audit.reward_due.insert(call.target);
        ++s.audit.stats.passed;
        break;
    case AuditOutcome::FailedFake: {
        s.audit.revocation_due[call.target] = *outcome;
        for (const auto& c : identity(s, call.target).certificates) {
            if (s.tokens.lock_amount(c.verifier, lock_verifier) > 0) s.audit.slash_due[c.verifier] = call.id;
            s.audit.suspension_due[c.verifier] = call.id;
        }
        ++s.audit.stats.failed;
        break;
    }
    case AuditOutcome::MissedDeadline:
        s.audit.revocation_due[call.target] = *outcome;
        ++s.audit.stats.missed;
        break;
    }
}

} // namespace

bool apply_audit_event(ApplicationState& s, const Event& ev)
{
    switch (ev.kind) {
    case EventKind::AJudgeCalled: apply_called(s, ev); return true;
    case EventKind::AJudgeAdjudicated: apply_adjudicated(s, ev); return true;
    default: return false;
    }
}

Json audit_to_json(const AuditState& a)
{
    Json calls = Json::array();
    for (const auto& [id, c] : a.calls)
        calls.push_back({{"id", id},
                         {"caller", c.caller.hex()},
                         {"target", c.target.hex()},
                         {"system", c.system},
                         {"called_epoch", c.called_epoch},
                         {"deadline_epoch", c.deadline_epoch},
                         {"outcome", c.outcome ? Json(std::string(to_string(*c.outcome))) : Json(nullptr)}});
    Json recheck = Json::object();
    for (const auto& [pk, q] : a.recheck)
        recheck[pk.hex()] = {{"window", q.window}, {"used", q.used}};
    Json rewards = Json::array();
    for (const auto& pk : a.reward_due)
        rewards.push_back(pk.hex());
    Json revocations = Json::object();
    for (const auto& [pk, o] : a.revocation_due)
        revocations[pk.hex()] = std::string(to_string(o));
    Json slashes = Json::object();
    for (const auto& [pk, id] : a.slash_due)
        slashes[pk.hex()] = id;
    Json suspensions = Json::object();
    for (const auto& [pk, id] : a.suspension_due)
        suspensions[pk.hex()] = id;
    return {{"calls", calls},
            {"recheck", recheck},
            {"reward_due", rewards},
            {"revocation_due", revocations},
            {"slash_due", slashes},
            {"suspension_due", suspensions},
            {"next_id", a.next_id},
            {"stats",
             {{"calls_opened", a.stats.calls_opened},
              {"passed", a.stats.passed},
              {"failed", a.stats.failed},
              {"missed", a.stats.missed},
              {"tokens_slashed", a.stats.tokens_slashed}}}};
}

} // namespace detail

} // namespace uniqueid
