#include "support.hpp"

#include "uniqueid/adversary.hpp"

#include <doctest.h>

using namespace uniqueid;
using uniqueid::testing::World;

namespace {

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const ProtocolError& e) {
        return e.code();
    }
    FAIL("expected a ProtocolError");
    return ErrorCode::InvalidEvent;
}

Amount conserved_total(const ApplicationState& s)
{
    const auto& sup = s.tokens.supply;
    return sup.genesis_supply + sup.minted - sup.forfeited;
}

/// Seven verifiers; a fake identity verified by three corrupted ones, who
/// then stay corrupted for the audit while the other four are honest.
struct FakeWorld : World {
    PersonId fake = key("fake");
    std::set<PersonId> certifiers;
    biometric::GroundTruth stand_in;

    FakeWorld() : World(7)
    {
        auto targets = std::make_shared<std::set<PersonId>>(std::set<PersonId>{fake});
        p.set_behavior(std::make_shared<adversary::CorruptBehavior>(
            std::set<PersonId>(verifiers.begin(), verifiers.end()), targets));
        stand_in = biometric::generate_person_ground_truth(p.policy(), rng);
        claim_with_stake(fake);
        for (int e = 0; e < 10 && record(fake).status != IdentityStatus::Verified; ++e) {
            const auto v = *record(fake).current_assignee;
            if (!p.submit_certificate(v, fake, biometric::sample_template(stand_in, p.policy(), rng)).verified)
                p.advance_epoch();
        }
        REQUIRE(record(fake).status == IdentityStatus::Verified);
        for (const auto& c : record(fake).certificates)
            certifiers.insert(c.verifier);
        p.set_behavior(std::make_shared<adversary::CorruptBehavior>(certifiers, targets));
    }

    PersonId honest_caller() const
    {
        for (const auto& v : verifiers)
            if (!certifiers.count(v)) return v;
        return verifiers[0];
    }

    PresentFn stand_in_presents()
    {
        return [this](const PersonId&) { return biometric::sample_template(stand_in, p.policy(), rng); };
    }
};

} // namespace

TEST_SUITE("audit")
{
    TEST_CASE("final verdict is a strict majority or unanimity")
    {
        CHECK(ajudge_final(4, 7, false));
        CHECK_FALSE(ajudge_final(3, 7, false));
        CHECK_FALSE(ajudge_final(2, 4, false));
        CHECK_FALSE(ajudge_final(6, 7, true));
        CHECK(ajudge_final(7, 7, true));
        CHECK_FALSE(ajudge_final(0, 0, false));
    }

    TEST_CASE("call authorization and the windowed re-check quota")
    {
        World w(6);
        const auto alice = w.new_verified("alice");
        const auto bob = w.new_verified("bob");
        const auto carol = w.new_verified("carol");
        const auto caller = w.verifiers[0];
        CHECK(code_of([&] { w.p.call_ajudge(alice, bob); }) == ErrorCode::NotAuthorized);
        CHECK(code_of([&] { w.p.call_ajudge(caller, caller); }) == ErrorCode::NotAuthorized);
        CHECK(code_of([&] { w.p.call_ajudge(caller, World::key("nobody")); }) == ErrorCode::TargetNotVerified);
        // Align to the start of a quota window.
        while (w.p.epoch() % w.params.quota_window_epochs != 0)
            w.p.advance_epoch();
        CHECK(recheck_quota_remaining(w.p.state(), caller, w.p.epoch()) == 2);
        w.p.call_ajudge(caller, alice);
        CHECK(code_of([&] { w.p.call_ajudge(w.verifiers[1], alice); }) == ErrorCode::InvalidEvent);
        w.p.call_ajudge(caller, bob);
        CHECK(code_of([&] { w.p.call_ajudge(caller, carol); }) == ErrorCode::QuotaExhausted);
        for (int i = 0; i < w.params.quota_window_epochs; ++i)
            w.p.advance_epoch();
        CHECK(recheck_quota_remaining(w.p.state(), caller, w.p.epoch()) == 2);
        w.p.call_ajudge(caller, carol);
        // System checks draw on no quota.
        const auto id = w.p.random_check(w.verifiers[3]);
        CHECK(w.p.state().audit.calls.at(id).system);
        CHECK(w.p.state().audit.calls.at(id).caller == system_account);
    }

    TEST_CASE("a genuine target passes and is rewarded once")
    {
        World w(6);
        const auto alice = w.new_verified("alice");
        const auto id = w.p.call_ajudge(w.verifiers[0], alice);
        const auto verdict = w.p.adjudicate(id, [&](const PersonId&) { return w.reading(alice); });
        CHECK(verdict.genuine);
        CHECK(verdict.outcome == AuditOutcome::PassedGenuine);
        CHECK(verdict.per_verifier.size() == 6);
        CHECK(w.p.settle_audit(id).total() == 0);
        const Amount before = w.p.state().tokens.balance(alice);
        CHECK(w.p.settle_rewards() == std::vector<PersonId>{alice});
        CHECK(w.p.state().tokens.balance(alice) == before + w.params.monetary.ajudge_reward);
        CHECK(w.p.settle_rewards().empty());
        CHECK(w.record(alice).status == IdentityStatus::Verified);
        CHECK(code_of([&] { w.p.adjudicate(id, [&](const PersonId&) { return w.reading(alice); }); })
              == ErrorCode::InvalidEvent);
    }

    TEST_CASE("a missed deadline revokes without slashing")
    {
        World w(6);
        const auto alice = w.new_verified("alice");
        const auto id = w.p.call_ajudge(w.verifiers[0], alice);
        CHECK(w.p.miss_deadlines().empty());
        for (int i = 0; i <= w.params.ajudge_deadline_epochs; ++i)
            w.p.advance_epoch();
        CHECK(code_of([&] { w.p.adjudicate(id, [&](const PersonId&) { return w.reading(alice); }); })
              == ErrorCode::DeadlinePassed);
        CHECK(w.p.miss_deadlines() == std::vector<std::int64_t>{id});
        const auto s = w.p.settle_audit(id);
        CHECK(s.slashed.empty());
        CHECK(s.suspended.empty());
        CHECK(w.record(alice).status == IdentityStatus::Revoked);
        CHECK(w.record(alice).revocation_reason == "missed_deadline");
        CHECK(w.p.state().audit.stats.missed == 1);
    }

    TEST_CASE("a failed fake revokes, slashes the certifiers to the caller and suspends them")
    {
        FakeWorld w;
        REQUIRE(w.certifiers.size() == 3);
        const auto caller = w.honest_caller();
        const auto id = w.p.call_ajudge(caller, w.fake);
        const auto verdict = w.p.adjudicate(id, w.stand_in_presents());
        CHECK(verdict.outcome == AuditOutcome::FailedFake);
        std::int64_t yes = 0;
        for (const auto& [v, vote] : verdict.per_verifier)
            yes += vote;
        CHECK(yes == 3);

        const Amount caller_before = w.p.state().tokens.balance(caller);
        const Amount total_before = w.p.state().tokens.total_holdings();
        const auto s = w.p.settle_audit(id);
        CHECK(s.beneficiary == caller);
        CHECK(s.slashed.size() == 3);
        CHECK(s.total() == 3 * w.params.monetary.verifier_stake);
        CHECK(w.p.state().tokens.balance(caller) == caller_before + s.total());
        CHECK(w.p.state().tokens.total_holdings() == total_before);
        CHECK(w.p.state().tokens.supply.slashed == s.total());
        CHECK(s.suspended.size() == 3);
        for (const auto& v : w.certifiers) {
            CHECK(w.p.state().tokens.lock_amount(v, lock_verifier) == 0);
            CHECK(w.p.state().trust.suspended(v, w.p.epoch()));
            CHECK_FALSE(is_eligible_verifier(w.p.state(), v, w.p.epoch()));
            CHECK(w.p.state().trust.suspended_until.at(v) == w.p.epoch() + w.params.suspension_epochs);
        }
        CHECK(w.record(w.fake).status == IdentityStatus::Revoked);
        CHECK(w.record(w.fake).revocation_reason == "failed_fake");
        CHECK_FALSE(w.p.dedup_index().contains(w.record(w.fake).template_digest));
        CHECK(w.p.state().tokens.total_holdings() == conserved_total(w.p.state()));
        // Settlement is idempotent.
        CHECK(w.p.settle_audit(id).total() == 0);
    }

    TEST_CASE("audit settlement survives replay")
    {
        FakeWorld w;
        const auto id = w.p.call_ajudge(w.honest_caller(), w.fake);
        w.p.adjudicate(id, w.stand_in_presents());
        w.p.settle_audit(id);
        const auto replayed = replay(w.p.ledger().events());
        CHECK(replayed.state_hash() == w.p.state().state_hash());
        CHECK(replayed.audit.stats.failed == 1);
        CHECK(replayed.tokens.supply.slashed == 3 * w.params.monetary.verifier_stake);
    }

    TEST_CASE("forged audit outcomes are rejected on replay")
    {
        FakeWorld w;
        const auto id = w.p.call_ajudge(w.honest_caller(), w.fake);
        Ledger forged;
        for (const auto& ev : w.p.ledger().events())
            forged.push(ev);
        // A pass needs a majority of the panel; claim it with the verdicts of only the corrupted three.
        Json verdicts = Json::object();
        for (const auto& v : w.verifiers)
            verdicts[v.hex()] = w.certifiers.count(v) > 0;
        forged.append(EventKind::AJudgeAdjudicated,
                      {{"id", id}, {"target", w.fake.hex()}, {"outcome", "PassedGenuine"}, {"verdicts", verdicts}},
                      w.p.epoch());
        CHECK_THROWS_AS(replay(forged.events()), RejectedEvent);
    }

    TEST_CASE("under unanimity one mismatching presentation fails the target")
    {
        ProtocolParams prm;
        prm.ajudge_unanimous = true;
        World w(5, prm);
        const auto alice = w.new_verified("alice");
        const auto id = w.p.call_ajudge(w.verifiers[0], alice);
        int calls = 0;
        const auto verdict = w.p.adjudicate(id, [&](const PersonId&) {
            Rng r(static_cast<std::uint64_t>(++calls));
            return calls == 1 ? biometric::sample_template(biometric::generate_person_ground_truth(w.p.policy(), r),
                                                           w.p.policy(), r)
                              : w.reading(alice);
        });
        CHECK(verdict.outcome == AuditOutcome::FailedFake);
    }
}
