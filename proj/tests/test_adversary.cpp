#include "support.hpp"

#include "uniqueid/attack.hpp"

#include <doctest.h>

#include <bit>
#include <cmath>
#include <functional>
#include <numeric>

using namespace uniqueid;
using namespace uniqueid::adversary;
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

/// Grinding over explicit verifier sets: a corrupt draw certifies, an
/// honest draw rejects and is retried while rejections remain. Honest
/// rejecters stay candidates; only certifiers are excluded.
double enumerate_grinding(int n, int k, int c, int r)
{
    std::function<double(std::uint32_t, int)> go = [&](std::uint32_t certified, int rejections) -> double {
        if (std::popcount(certified) == c) return 1.0;
        std::vector<int> cands;
        for (int v = 0; v < n; ++v)
            if (!(certified >> v & 1u)) cands.push_back(v);
        double p = 0.0;
        for (int v : cands) {
            if (v < k) p += go(certified | 1u << v, rejections);
            else if (rejections < r) p += go(certified, rejections + 1);
        }
        return p / static_cast<double>(cands.size());
    };
    return go(0, 0);
}

sim::ScenarioConfig attack_config(std::int64_t verifiers, std::int64_t k, std::int64_t attempts, bool grinding,
                                  std::int64_t max_reassignments)
{
    return sim::config_from_json(Json{
        {"seed", 99},
        {"epochs", 0},
        {"cities", {{{"id", "porto"}, {"genesis_verifiers", verifiers}, {"arrival_rate", 0}}}},
        {"protocol", {{"certs_required", 3}, {"max_reassignments", max_reassignments}}},
        {"monetary", {{"a", 1000}, {"x", 100}}},
        {"biometric", {{"tau", 0.74}}},
        {"governance", {{"enabled", false}}},
        {"metrics", false},
        {"adversary",
         {{"corrupt_count", k},
          {"bribe_cost_per_verifier", 500},
          {"attempts", attempts},
          {"attempts_per_epoch", 1},
          {"batch_size", 500},
          {"budget", 50000},
          {"grinding", grinding}}}});
}

void check_within(double observed, double p, std::int64_t n, double z)
{
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    INFO("observed " << observed << " expected " << p << " se " << se);
    CHECK(std::abs(observed - p) <= z * se);
}

} // namespace

TEST_SUITE("adversary")
{
    TEST_CASE("closed-form collusion probability")
    {
        CHECK(probability_all_assigned_corrupt(100, 10, 3) == doctest::Approx(2.0 / 2695.0).epsilon(1e-12));
        CHECK(probability_all_assigned_corrupt(100, 2, 3) == 0.0);
        CHECK(probability_all_assigned_corrupt(100, 100, 3) == 1.0);
        CHECK(probability_all_assigned_corrupt(5, 3, 0) == 1.0);
        CHECK(code_of([] { probability_all_assigned_corrupt(10, 11, 3); }) == ErrorCode::InvalidCounts);
        CHECK(code_of([] { probability_all_assigned_corrupt(10, 5, 11); }) == ErrorCode::InvalidCounts);
        CHECK(code_of([] { probability_all_assigned_corrupt(-1, 0, 0); }) == ErrorCode::InvalidCounts);
        CHECK(code_of([] { probability_with_grinding(10, 5, 3, -1); }) == ErrorCode::InvalidCounts);
    }

    TEST_CASE("closed form matches exhaustive enumeration for small N")
    {
        for (int n = 1; n <= 9; ++n)
            for (int c = 1; c <= std::min(n, 4); ++c)
                for (int k = 0; k <= n; ++k) {
                    INFO("N=" << n << " k=" << k << " c=" << c);
                    REQUIRE(probability_all_assigned_corrupt(n, k, c)
                            == doctest::Approx(testing::enumerate_all_corrupt(n, k, c)).epsilon(1e-12));
                }
        CHECK(probability_all_assigned_corrupt(12, 5, 3) == doctest::Approx(testing::enumerate_all_corrupt(12, 5, 3)));
    }

    TEST_CASE("grinding probability")
    {
        CHECK(probability_with_grinding(100, 10, 3, 3) == doctest::Approx(1.202371782845e-2).epsilon(1e-10));
        CHECK(probability_with_grinding(10, 4, 3, 2) == doctest::Approx(20641.0 / 108000.0).epsilon(1e-12));
        CHECK(probability_with_grinding(30, 7, 3, 0) == doctest::Approx(probability_all_assigned_corrupt(30, 7, 3)));
        CHECK(probability_with_grinding(30, 2, 3, 5) == 0.0);
        for (int n = 3; n <= 8; ++n)
            for (int k = 0; k <= n; ++k)
                for (int r = 0; r <= 3; ++r) {
                    INFO("N=" << n << " k=" << k << " R=" << r);
                    REQUIRE(probability_with_grinding(n, k, 3, r)
                            == doctest::Approx(enumerate_grinding(n, k, 3, r)).epsilon(1e-12));
                }
        // More tolerated rejections never hurt the adversary.
        for (int r = 0; r < 6; ++r)
            CHECK(probability_with_grinding(50, 8, 3, r + 1) >= probability_with_grinding(50, 8, 3, r));
    }

    TEST_CASE("collusion curve")
    {
        const auto cfg = sim::config_from_json(Json{
            {"seed", 1},
            {"epochs", 0},
            {"cities", {{{"id", "lisbon"}, {"genesis_verifiers", 100}}}},
            {"biometric", {{"tau", 0.74}}},
            {"adversary", {{"corrupt_count", 10}, {"bribe_cost_per_verifier", 500}}}});
        const auto curve = min_collusion_curve(cfg, 0.5);
        REQUIRE(curve.min_k);
        CHECK(*curve.min_k == 80);
        REQUIRE(curve.points.size() == 98);
        CHECK(curve.points.front().k == 3);
        CHECK(curve.points.back().success_prob == 1.0);
        for (std::size_t i = 1; i < curve.points.size(); ++i) {
            CHECK(curve.points[i].success_prob >= curve.points[i - 1].success_prob);
            CHECK(curve.points[i].expected_cost > curve.points[i - 1].expected_cost);
        }
        const auto& p80 = curve.points[77];
        CHECK(p80.k == 80);
        CHECK(p80.success_prob >= 0.5);
        CHECK(curve.points[76].success_prob < 0.5);
        CHECK(p80.expected_cost
              == doctest::Approx(80 * 500 + p80.success_prob * 3 * cfg.params.monetary.verifier_stake));
        CHECK_FALSE(min_collusion_curve(cfg, 1.1).min_k);
    }

    TEST_CASE("corrupted verifiers certify anything and shield targets")
    {
        const auto bad = World::key("bad"), good = World::key("good");
        const auto target = World::key("target"), other = World::key("other");
        const CorruptBehavior b({bad}, std::make_shared<std::set<PersonId>>(std::set<PersonId>{target}));
        CHECK(b.certify(bad, other, false));
        CHECK_FALSE(b.certify(good, other, false));
        CHECK(b.certify(good, other, true));
        CHECK(b.ajudge_vote(bad, target, false));
        CHECK_FALSE(b.ajudge_vote(bad, other, false));
        CHECK_FALSE(b.ajudge_vote(good, target, false));
        CHECK_FALSE(b.dedup_vote(bad, target, true));
        CHECK(b.dedup_vote(bad, other, true));
        CHECK(b.dedup_vote(good, target, true));
    }

    TEST_CASE("plan parsing")
    {
        const auto p = plan_from_json({{"strategy", "StakeGrinding"}, {"corrupt_count", 4}, {"grinding", true}});
        CHECK(p.strategy == Strategy::StakeGrinding);
        CHECK(p.corrupt_count == 4);
        CHECK(plan_from_json(to_json(p)).grinding);
        CHECK(code_of([] { plan_from_json({{"corupt_count", 4}}); }) == ErrorCode::ConfigInvalid);
        CHECK(code_of([] { plan_from_json({{"strategy", "Teleport"}}); }) == ErrorCode::ConfigInvalid);
        CHECK(code_of([] { plan_from_json({{"attempts", 0}}); }) == ErrorCode::ConfigInvalid);
        CHECK(code_of([] { plan_from_json({{"attempts", "many"}}); }) == ErrorCode::ConfigInvalid);
    }

    TEST_CASE("fewer corrupted verifiers than certificates never succeed")
    {
        const auto r = run_attack(attack_config(10, 2, 500, true, 3), {1, 0});
        CHECK(r.attempts == 500);
        CHECK(r.reached_verified == 0);
        CHECK(r.successes == 0);
        CHECK(r.rejected == 500);
        CHECK(r.collusion_size == 2);
        CHECK(r.bribes == 1000);
    }

    TEST_CASE("full simulator matches the closed form")
    {
        const auto plain = run_attack(attack_config(10, 4, 3000, false, 3), {0, 0});
        CHECK(plain.attempts == 3000);
        check_within(plain.success_rate(), probability_all_assigned_corrupt(10, 4, 3), plain.attempts, 4.0);

        const auto ground = run_attack(attack_config(10, 4, 3000, true, 2), {0, 0});
        check_within(ground.success_rate(), probability_with_grinding(10, 4, 3, 2), ground.attempts, 4.0);
        CHECK(ground.success_rate() > plain.success_rate());
    }

    TEST_CASE("audited fakes are caught and their certifiers slashed")
    {
        auto cfg = attack_config(12, 6, 30, true, 3);
        cfg.adversary->audit_successes = true;
        cfg.adversary->observation_epochs = 3;
        const auto r = run_attack(cfg, {1, 0});
        REQUIRE(r.reached_verified > 0);
        CHECK(r.detected == r.reached_verified);
        CHECK(r.successes == 0);
        CHECK(r.slashed > 0);
        CHECK(r.time_to_detection.count == r.detected);
        CHECK(r.tokens_spent == r.bribes + r.forfeited + r.slashed);
    }

    TEST_CASE("attack reports do not depend on the thread count")
    {
        const auto cfg = attack_config(10, 5, 1200, true, 2);
        const auto one = run_attack(cfg, {1, 0});
        const auto four = run_attack(cfg, {4, 0});
        CHECK(to_json(one) == to_json(four));
    }

    TEST_CASE("an unfundable plan is refused")
    {
        auto cfg = attack_config(10, 4, 10, false, 3);
        cfg.adversary->budget = 0;
        CHECK(code_of([&] { run_attack(cfg, {1, 0}); }) == ErrorCode::BudgetExceeded);
        cfg.adversary.reset();
        CHECK(code_of([&] { run_attack(cfg, {1, 0}); }) == ErrorCode::ConfigInvalid);
    }
}
