#include "apply_internal.hpp"

#include <algorithm>
#include <numeric>

namespace uniqueid {

Amount TokenState::total_holdings() const
{
    Amount total = 0;
    for (const auto& [pk, a] : accounts)
        total += a.balance + a.locked;
    return total;
}

std::vector<Credit> verification_credits(const PersonId& user, const std::vector<PersonId>& verifiers,
                                         const MonetaryParams& m)
{
    const std::int64_t denom = m.mint_user_weight + static_cast<std::int64_t>(verifiers.size()) * m.mint_verifier_weight;
    const Amount each = m.x * m.mint_verifier_weight / denom;
    std::vector<Credit> out;
    out.push_back({user, m.x - each * static_cast<Amount>(verifiers.size())});
    for (const auto& v : verifiers)
        out.push_back({v, each});
    return out;
}

double gini(std::vector<Amount> amounts)
{
    if (amounts.empty()) return 0.0;
    std::sort(amounts.begin(), amounts.end());
    long double total = 0, weighted = 0;
    for (std::size_t i = 0; i < amounts.size(); ++i) {
        total += amounts[i];
        weighted += static_cast<long double>(i + 1) * amounts[i];
    }
    if (total <= 0) return 0.0;
    const long double n = static_cast<long double>(amounts.size());
    return static_cast<double>(2 * weighted / (n * total) - (n + 1) / n);
}

namespace detail {

namespace {

Amount positive_amount(const Json& payload)
{
    const Amount a = field_int(payload, "amount");
    if (a <= 0) reject(ErrorCode::InvalidEvent, "amount must be positive");
    return a;
}

void credit(TokenState& t, const PersonId& pk, Amount amount)
{
    t.accounts[pk].balance += amount;
}

void debit(TokenState& t, const PersonId& pk, Amount amount)
{
    if (t.balance(pk) < amount) reject(ErrorCode::InsufficientBalance, pk.hex());
    t.accounts[pk].balance -= amount;
}

// Removes an active lock of exactly `amount` and returns it; the caller
// decides where the tokens go.
Amount release_lock(TokenState& t, const PersonId& pk, const std::string& reason, Amount amount)
{
    auto it = t.locks.find({pk, reason});
    if (it == t.locks.end()) reject(ErrorCode::NoActiveLock, pk.hex() + " " + reason);
    if (it->second != amount) reject(ErrorCode::InvalidEvent, "amount differs from the active lock");
    t.locks.erase(it);
    t.accounts[pk].locked -= amount;
    t.supply.locked -= amount;
    return amount;
}

void apply_allocated(ApplicationState& s, const Event& ev)
{
    if (!s.genesis_open || s.tokens.allocated) reject(ErrorCode::InvalidEvent, "allocation only once at genesis");
    std::vector<Credit> credits;
    Amount sum = 0;
    for (const auto& a : field_array(ev.payload, "allocations")) {
        const Amount amount = positive_amount(a);
        credits.push_back({field_pk(a, "pk"), amount});
        sum += amount;
    }
    const Amount supply = s.params.monetary.genesis_supply();
    if (sum != supply)
        reject(ErrorCode::AllocationMismatch, std::to_string(sum) + " != " + std::to_string(supply));
    for (const auto& c : credits)
        credit(s.tokens, c.pk, c.amount);
    s.tokens.allocated = true;
    s.tokens.supply.genesis_supply = supply;
}

void apply_transferred(ApplicationState& s, const Event& ev)
{
    const PersonId from = field_pk(ev.payload, "from");
    const PersonId to = field_pk(ev.payload, "to");
    const Amount amount = positive_amount(ev.payload);
    if (from == to) reject(ErrorCode::InvalidEvent, "transfer to self");
    debit(s.tokens, from, amount);
    credit(s.tokens, to, amount);
}

void apply_locked(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    const Amount amount = positive_amount(ev.payload);
    const std::string& reason = field_str(ev.payload, "reason");
    const auto& r = identity(s, pk);
    if (reason == lock_entry) {
        if (r.status != IdentityStatus::PendingVerification || r.entry_gate.kind != GateKind::Stake
            || r.entry_gate.amount != amount)
            reject(ErrorCode::InvalidEvent, "entry lock must match a pending stake-gated claim");
    } else if (reason == lock_verifier) {
        if (r.status != IdentityStatus::Verified) reject(ErrorCode::Unverified, pk.hex());
        if (amount != s.params.monetary.verifier_stake) reject(ErrorCode::InvalidEvent, "verifier stake amount");
    } else {
        reject(ErrorCode::InvalidEvent, "unknown lock reason " + reason);
    }
    if (s.tokens.locks.count({pk, reason})) reject(ErrorCode::InvalidEvent, "lock already active");
    debit(s.tokens, pk, amount);
    s.tokens.locks[{pk, reason}] = amount;
    s.tokens.accounts[pk].locked += amount;
    s.tokens.supply.locked += amount;
}

void apply_returned(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    if (field_str(ev.payload, "reason") != lock_entry) reject(ErrorCode::InvalidEvent, "only entry stakes return");
    if (identity(s, pk).status != IdentityStatus::Verified) reject(ErrorCode::Unverified, pk.hex());
    credit(s.tokens, pk, release_lock(s.tokens, pk, lock_entry, positive_amount(ev.payload)));
}

void apply_forfeited(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    if (field_str(ev.payload, "reason") != lock_entry) reject(ErrorCode::InvalidEvent, "only entry stakes forfeit");
    if (identity(s, pk).status != IdentityStatus::Revoked)
        reject(ErrorCode::InvalidEvent, "stake forfeits only on terminal failure");
    s.tokens.supply.forfeited += release_lock(s.tokens, pk, lock_entry, positive_amount(ev.payload));
}

void apply_slashed(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    const auto call_id = field_int(ev.payload, "call");
    auto due = s.audit.slash_due.find(pk);
    if (due == s.audit.slash_due.end() || due->second != call_id)
        reject(ErrorCode::InvalidEvent, "no failed audit names " + pk.hex());
    const PersonId beneficiary = field_pk(ev.payload, "beneficiary");
    if (beneficiary != s.audit.calls.at(call_id).caller) reject(ErrorCode::InvalidEvent, "slash goes to the caller");
    const Amount amount = release_lock(s.tokens, pk, lock_verifier, positive_amount(ev.payload));
    credit(s.tokens, beneficiary, amount);
    s.tokens.supply.slashed += amount;
    s.audit.stats.tokens_slashed += amount;
    s.audit.slash_due.erase(due);
}

void apply_minted(ApplicationState& s, const Event& ev)
{
    const PersonId pk = field_pk(ev.payload, "pk");
    const std::string& reason = field_str(ev.payload, "reason");
    std::vector<Credit> credits;
    for (const auto& c : field_array(ev.payload, "credits"))
        credits.push_back({field_pk(c, "pk"), field_int(c, "amount")});

    auto& r = identity(s, pk);
    std::vector<Credit> expected;
    if (reason == "verification") {
        if (r.status != IdentityStatus::Verified || r.minted)
            reject(ErrorCode::InvalidEvent, "mint only once, on verification");
        std::vector<PersonId> verifiers;
        for (const auto& c : r.certificates)
            verifiers.push_back(c.verifier);
        expected = verification_credits(pk, verifiers, s.params.monetary);
    } else if (reason == "ajudge_reward") {
        if (!s.audit.reward_due.count(pk)) reject(ErrorCode::InvalidEvent, "no passed audit to reward");
        expected = {{pk, s.params.monetary.ajudge_reward}};
    } else {
        reject(ErrorCode::InvalidEvent, "unknown mint reason " + reason);
    }
    if (credits != expected) reject(ErrorCode::InvalidEvent, "mint credits differ from the issuance rule");

    Amount total = 0;
    for (const auto& c : credits) {
        credit(s.tokens, c.pk, c.amount);
        total += c.amount;
    }
    s.tokens.supply.minted += total;
    if (reason == "verification") {
        r.minted = true;
        s.tokens.supply.minted_verification += total;
        ++s.tokens.supply.verifications_minted;
    } else {
        s.audit.reward_due.erase(pk);
    }
}

} // namespace

bool apply_token_event(ApplicationState& s, const Event& ev)
{
    switch (ev.kind) {
    case EventKind::TokensAllocated: apply_allocated(s, ev); return true;
    case EventKind::TokensTransferred: apply_transferred(s, ev); return true;
    case EventKind::StakeLocked: apply_locked(s, ev); return true;
    case EventKind::StakeReturned: apply_returned(s, ev); return true;
    case EventKind::StakeForfeited: apply_forfeited(s, ev); return true;
    case EventKind::StakeSlashed: apply_slashed(s, ev); return true;
    case EventKind::TokensMinted: apply_minted(s, ev); return true;
    default: return false;
    }
}

Json tokens_to_json(const TokenState& t)
{
    Json accounts = Json::object();
    for (const auto& [pk, a] : t.accounts)
        accounts[pk.hex()] = {{"balance", a.balance}, {"locked", a.locked}};
    Json locks = Json::array();
    for (const auto& [key, amount] : t.locks)
        locks.push_back({{"pk", key.first.hex()}, {"reason", key.second}, {"amount", amount}});
    const auto& s = t.supply;
    return {{"accounts", accounts},
            {"locks", locks},
            {"allocated", t.allocated},
            {"supply",
             {{"genesis_supply", s.genesis_supply},
              {"minted", s.minted},
              {"minted_verification", s.minted_verification},
              {"verifications_minted", s.verifications_minted},
              {"forfeited", s.forfeited},
              {"slashed", s.slashed},
              {"locked", s.locked}}}};
}

} // namespace detail

} // namespace uniqueid
