// Acceptance checks 1-10. One PASS/FAIL line per criterion; exit status is
// the number of failures.

#include "support.hpp"

#include "uniqueid/attack.hpp"
#include "uniqueid/cli.hpp"
#include "uniqueid/governance.hpp"
#include "uniqueid/sim.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace uniqueid;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double ledger_seconds = 5.0;
constexpr int tamper_trials = 200;
constexpr double calibration_seconds = 30.0;
constexpr std::uint64_t calibration_pairs = 100'000;
constexpr double far_frr_gap = 0.003;
constexpr double default_eer_bound = 0.02;
constexpr double documented_sigma = 0.12; // oracle EER 6.78e-3
constexpr double documented_eer_bound = 0.01;
constexpr std::uint64_t fusion_pairs = 1'000'000;
constexpr double z_bound = 3.0;
constexpr double collusion_seconds = 60.0;
constexpr double throughput_seconds = 60.0;
constexpr int liveness_seeds = 100;
constexpr int liveness_required = 95;

// oracles.py
constexpr double eer01_sigma = 0.12756406764768366;
constexpr double eer01_tau = 1.0205113757046982;
constexpr double fused_flag = 3.97e-6;
constexpr double fused_miss = 5.9203e-4;
constexpr double collusion_p = 120.0 / 161700.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

struct Result {
    bool pass = false;
    std::string detail;
};

fs::path scratch(const std::string& name)
{
    const auto dir = fs::path(UNIQUEID_BINARY_DIR) / "acceptance_scratch" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Json load_config(const std::string& name)
{
    std::ifstream in(std::string(UNIQUEID_SOURCE_DIR) + "/configs/" + name);
    if (!in) throw std::runtime_error("missing config " + name);
    return Json::parse(in);
}

std::string ledger_bytes(const sim::Simulator& s)
{
    std::ostringstream out;
    s.protocol().ledger().write_jsonl(out);
    return out.str();
}

double se(double p, double n)
{
    return std::sqrt(p * (1.0 - p) / n);
}

int verify_file(const fs::path& path)
{
    const std::string p = path.string();
    const char* argv[] = {"uniqueid-sim", "verify", "--ledger", p.c_str()};
    std::ostringstream out, err;
    return cli::main(4, argv, out, err);
}

bool conserved(const ApplicationState& s)
{
    const auto& sup = s.tokens.supply;
    Amount locked = 0;
    for (const auto& [k, a] : s.tokens.locks)
        locked += a;
    return s.tokens.total_holdings() == sup.genesis_supply + sup.minted - sup.forfeited && locked == sup.locked;
}

Result ledger_determinism()
{
    const auto cfg = sim::config_from_json(Json{
        {"seed", 31},
        {"epochs", 14},
        {"cities", {{{"id", "lisbon"}, {"genesis_verifiers", 10}, {"arrival_rate", 100}, {"max_arrivals", 1000}}}},
        {"protocol", {{"random_check_rate", 0.25}, {"honest_call_rate", 0.02}}}});
    const auto t0 = Clock::now();
    sim::Simulator a(cfg);
    a.run();
    const double secs = seconds_since(t0);
    sim::Simulator b(cfg);
    b.run();
    const auto bytes = ledger_bytes(a);
    const bool same = bytes == ledger_bytes(b) && a.protocol().state().state_hash() == b.protocol().state().state_hash();
    const auto users = a.rows().back().claims_total;

    const auto dir = scratch("ledger");
    const auto clean = dir / "ledger.jsonl";
    std::ofstream(clean, std::ios::binary) << bytes;
    const bool clean_ok = verify_file(clean) == 0;
    Rng rng(77);
    int caught = 0;
    const auto mutated = dir / "mutated.jsonl";
    for (int t = 0; t < tamper_trials; ++t) {
        auto m = bytes;
        const auto pos = rng.below(m.size());
        const auto delta = static_cast<char>(1 + rng.below(255));
        m[pos] = static_cast<char>(m[pos] + delta);
        std::ofstream(mutated, std::ios::binary) << m;
        caught += verify_file(mutated) == 1;
    }
    fs::remove_all(dir);
    return {same && clean_ok && caught == tamper_trials && secs < ledger_seconds && users >= 1000,
            fmt("identical=%.0f users=%.0f run=%.2fs tamper caught %.0f/", same, static_cast<double>(users), secs,
                caught)
                + std::to_string(tamper_trials)};
}

Result eer_calibration()
{
    const auto t0 = Clock::now();
    biometric::MatchPolicy p;
    Rng rng(2);
    const auto c = biometric::calibrate_tau(p, calibration_pairs, rng, 1.0);
    auto q = p;
    q.genuine_noise_sigma = documented_sigma;
    const auto c2 = biometric::calibrate_tau(q, calibration_pairs, rng, 1.0);
    const double secs = seconds_since(t0);
    const bool ok = std::abs(c.far - c.frr) <= far_frr_gap && c.eer() <= default_eer_bound
                    && std::abs(c2.far - c2.frr) <= far_frr_gap && c2.eer() <= documented_eer_bound
                    && secs < calibration_seconds;
    return {ok, fmt("sigma 0.08: tau=%.4f EER=%.2e; sigma 0.12: EER=%.2e; %.1fs", c.tau, c.eer(), c2.eer(), secs)};
}

Result fusion()
{
    biometric::MatchPolicy p;
    p.genuine_noise_sigma = eer01_sigma;
    p.tau = eer01_tau;
    Rng rng(3);
    const auto r = testing::fused_rates(p, fusion_pairs, rng);
    const double n = static_cast<double>(fusion_pairs);
    const bool mc = std::abs(r.false_flag - fused_flag) <= z_bound * se(fused_flag, n)
                    && std::abs(r.miss - fused_miss) <= z_bound * se(fused_miss, n);
    const double and_far = biometric::fused_match_probability(0.01, 4, 4);
    const bool closed = std::abs(and_far - 1e-8) <= 1e-20
                        && std::abs(biometric::fused_match_probability(0.01, 4, 3) - fused_flag) <= 1e-18
                        && std::abs(1.0 - biometric::fused_match_probability(0.99, 4, 3) - fused_miss) <= 1e-12;
    return {mc && closed, fmt("flag=%.2e miss=%.3e at 1e6 pairs; AND FAR=%.1e", r.false_flag, r.miss, and_far)};
}

Result collusion()
{
    const auto cfg = sim::config_from_json(load_config("collusion.json"));
    const auto t0 = Clock::now();
    const auto r = adversary::run_attack(cfg);
    const double secs = seconds_since(t0);
    const double rate = r.success_rate();
    const bool mc = r.attempts == 100'000
                    && std::abs(rate - collusion_p) <= z_bound * se(collusion_p, static_cast<double>(r.attempts));
    bool enumerated = true;
    for (int n = 1; n <= 12; ++n)
        for (int c = 1; c <= std::min(n, 3); ++c)
            for (int k = 0; k <= n; ++k) {
                const double closed = adversary::probability_all_assigned_corrupt(n, k, c);
                enumerated = enumerated && std::abs(closed - testing::enumerate_all_corrupt(n, k, c)) <= 1e-12;
            }
    return {mc && enumerated && secs < collusion_seconds,
            fmt("rate=%.3e (closed %.3e, 3 SE %.1e) over 1e5; %.1fs", rate, collusion_p, z_bound * se(collusion_p, 1e5),
                secs)
                + (enumerated ? "; enumeration agrees for N <= 12" : "; enumeration MISMATCH")};
}

Result conservation()
{
    constexpr std::int64_t a = 60;
    constexpr Amount x = 100;
    const auto cfg = sim::config_from_json(Json{
        {"seed", 5},
        {"epochs", 100},
        {"cities", {{{"id", "porto"}, {"genesis_verifiers", 10}, {"arrival_rate", 4}, {"max_arrivals", 200}}}},
        {"protocol", {{"random_check_rate", 0.3}, {"honest_call_rate", 0.02}}},
        {"monetary", {{"a", a}, {"x", x}}},
        {"biometric", {{"tau", 0.7398}}},
        {"adversary",
         {{"corrupt_count", 5},
          {"grinding", true},
          {"attempts", 40},
          {"budget", 1500},
          {"audit_successes", true}}}});
    sim::Simulator s(cfg);
    s.run();
    std::int64_t checked = 0, broken = 0;
    bool crossover_seen = false, crossover_ok = true;
    replay(s.protocol().ledger().events(), [&](const Event&, const ApplicationState& st) {
        if (!st.tokens.allocated) return;
        ++checked;
        broken += !conserved(st);
        const auto& sup = st.tokens.supply;
        if (sup.verifications_minted < a) crossover_ok = crossover_ok && sup.minted_verification < a * x;
        if (sup.verifications_minted == a && !crossover_seen) {
            crossover_seen = true;
            crossover_ok = crossover_ok && sup.minted_verification == a * x
                           && sup.minted_verification == sup.genesis_supply;
        }
    });
    const auto& sup = s.protocol().state().tokens.supply;
    const bool adversarial = sup.forfeited > 0 && sup.slashed > 0;
    return {broken == 0 && crossover_seen && crossover_ok && adversarial,
            fmt("%.0f events checked, %.0f broken; slashed=%.0f forfeited=%.0f", static_cast<double>(checked),
                static_cast<double>(broken), static_cast<double>(sup.slashed), static_cast<double>(sup.forfeited))
                + (crossover_seen && crossover_ok ? "; minted = a*x at verification a" : "; crossover FAILED")};
}

Result governance_tallies()
{
    using namespace governance;
    const ThresholdTriple t{680'000, 850'000, 950'000};
    const std::array<LayerBallots, 3> fixture{LayerBallots{70, 30, 0}, LayerBallots{30, 5, 0}, LayerBallots{19, 1, 0}};
    bool ok = tally(fixture, t) == ProposalStatus::Passed;
    // 67/100, 29/35 and 18/20 are each just below their layer's threshold.
    const LayerBallots below[] = {{67, 33, 0}, {29, 6, 0}, {18, 2, 0}};
    for (std::size_t l = 0; l < 3; ++l) {
        auto lower = fixture;
        lower[l] = below[l];
        ok = ok && tally(lower, t) == ProposalStatus::Failed;
    }

    Rng rng(11);
    int violations = 0;
    for (int set = 0; set < 1000; ++set) {
        std::array<LayerBallots, 3> b;
        for (auto& l : b) {
            const auto n = 1 + static_cast<std::int64_t>(rng.below(80));
            l.approvals = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n) + 1));
            l.rejections = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - l.approvals) + 1));
            l.abstentions = n - l.approvals - l.rejections;
        }
        // More approvals never flip a pass; stricter thresholds never flip a fail.
        auto more = b;
        auto& l = more[rng.below(3)];
        if (l.rejections > 0) --l.rejections, ++l.approvals;
        else if (l.abstentions > 0) --l.abstentions, ++l.approvals;
        const auto base = tally(b, t);
        if (base == ProposalStatus::Passed && tally(more, t) != ProposalStatus::Passed) ++violations;
        ThresholdTriple stricter = t;
        std::int64_t* layer[] = {&stricter.layer1, &stricter.layer2, &stricter.layer3};
        *layer[rng.below(3)] += static_cast<std::int64_t>(rng.below(50'000));
        if (base == ProposalStatus::Failed && tally(b, stricter) != ProposalStatus::Failed) ++violations;
    }
    return {ok && violations == 0,
            std::string("fixture ") + (ok ? "passes and fails as required" : "WRONG") + "; monotonicity violations "
                + std::to_string(violations) + "/1000"};
}

Result audit_settlement()
{
    struct Call {
        PersonId caller;
        std::map<PersonId, Amount> certifiers; // verifier lock held at adjudication
        Amount received = 0;
        std::set<PersonId> slashed;
    };
    std::int64_t failed_calls = 0, full_calls = 0, bad = 0, checked_ineligible = 0;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto cfg = sim::config_from_json(Json{
            {"seed", seed},
            {"epochs", 12},
            {"cities", {{{"id", "braga"}, {"genesis_verifiers", 12}, {"arrival_rate", 2}, {"max_arrivals", 10}}}},
            {"biometric", {{"tau", 0.7398}}},
            {"adversary",
             {{"corrupt_count", 6}, {"grinding", true}, {"attempts", 4}, {"budget", 2000}, {"audit_successes", true}}}});
        const auto c_required = cfg.params.certs_required;
        const auto stake = cfg.params.monetary.verifier_stake;
        sim::Simulator s(cfg);
        s.run();
        std::map<std::int64_t, Call> calls;
        std::map<PersonId, std::int64_t> slashed_by;
        std::map<PersonId, Amount> balance;
        std::set<PersonId> awaiting_epoch;
        replay(s.protocol().ledger().events(), [&](const Event& ev, const ApplicationState& st) {
            if (ev.kind == EventKind::AJudgeAdjudicated && field_str(ev.payload, "outcome") == "FailedFake") {
                const auto id = field_int(ev.payload, "id");
                Call c;
                c.caller = st.audit.calls.at(id).caller;
                const auto* target = st.registry.find(*PersonId::parse(field_str(ev.payload, "target")));
                for (const auto& cert : target->certificates)
                    c.certifiers[cert.verifier] = st.tokens.lock_amount(cert.verifier, lock_verifier);
                calls[id] = c;
            } else if (ev.kind == EventKind::StakeSlashed) {
                const auto id = field_int(ev.payload, "call");
                auto& c = calls.at(id);
                const auto pk = *PersonId::parse(field_str(ev.payload, "pk"));
                const auto to = *PersonId::parse(field_str(ev.payload, "beneficiary"));
                const auto amount = field_int(ev.payload, "amount");
                c.received += amount;
                c.slashed.insert(pk);
                bad += !slashed_by.emplace(pk, id).second; // one slash per stake
                bad += !c.certifiers.count(pk) || c.certifiers.at(pk) != amount;
                bad += to != c.caller;
                bad += st.tokens.balance(to) != balance[to] + amount;
                awaiting_epoch.insert(pk);
            } else if (ev.kind == EventKind::BeaconAdvanced) {
                for (const auto& pk : awaiting_epoch) {
                    ++checked_ineligible;
                    bad += is_eligible_verifier(st, pk, st.epoch);
                }
                awaiting_epoch.clear();
            }
            for (const auto& [id, c] : calls)
                balance[c.caller] = st.tokens.balance(c.caller);
        });
        for (const auto& [id, c] : calls) {
            ++failed_calls;
            // Every certifier still staked is slashed, by this call or a concurrent one.
            for (const auto& [pk, lock] : c.certifiers)
                bad += lock > 0 && !slashed_by.count(pk);
            if (static_cast<std::int64_t>(c.slashed.size()) == c_required && c.received == c_required * stake)
                ++full_calls;
        }
    }
    return {bad == 0 && full_calls > 0 && checked_ineligible > 0,
            std::to_string(failed_calls) + " FailedFake calls, " + std::to_string(full_calls)
                + " paid c*verifier_stake to the caller, " + std::to_string(checked_ineligible)
                + " slashed verifiers ineligible next epoch, " + std::to_string(bad) + " violations (replayed)"};
}

Result invitation_bound()
{
    std::int64_t rows = 0, violations = 0, max_claims = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto cfg = sim::config_from_json(Json{
            {"seed", seed},
            {"epochs", 20},
            {"cities",
             {{{"id", "coimbra"}, {"genesis_verifiers", 5}, {"arrival_rate", 40}, {"max_arrivals", 800}},
              {{"id", "leiria"}, {"genesis_verifiers", 3}, {"arrival_rate", 10}}}},
            {"arrivals", {{"gate_order", {"invitation"}}}},
            {"biometric", {{"tau", 0.7398}}}});
        std::int64_t genesis = 0;
        for (const auto& c : cfg.cities)
            genesis += c.genesis_verifiers;
        sim::Simulator s(cfg);
        s.genesis();
        for (std::int64_t e = 0; e < cfg.epochs; ++e) {
            s.step();
            const auto& r = s.rows().back();
            ++rows;
            violations += r.claims_total > 1 + 2 * r.verified + genesis;
            max_claims = std::max(max_claims, r.claims_total);
        }
    }
    return {violations == 0 && max_claims > 100,
            std::to_string(rows) + " epochs, " + std::to_string(violations) + " over the bound, peak claims "
                + std::to_string(max_claims)};
}

Result liveness()
{
    auto cfg = sim::config_from_json(load_config("honest_small.json"));
    int good = 0, worst = 1000;
    for (int seed = 1; seed <= liveness_seeds; ++seed) {
        cfg.seed = static_cast<std::uint64_t>(seed);
        sim::Simulator s(cfg);
        s.run();
        const std::int64_t verified = s.rows().back().verified - cfg.cities.front().genesis_verifiers;
        good += verified >= 99;
        worst = std::min<int>(worst, static_cast<int>(verified));
    }
    return {good >= liveness_required,
            std::to_string(good) + "/" + std::to_string(liveness_seeds) + " seeds reached 99 verified in 10 epochs (worst "
                + std::to_string(worst) + ")"};
}

Result throughput()
{
    const auto cfg = sim::config_from_json(load_config("throughput.json"));
    const auto t0 = Clock::now();
    sim::Simulator s(cfg);
    s.run();
    const double secs = seconds_since(t0);
    std::int64_t genesis = 0;
    for (const auto& c : cfg.cities)
        genesis += c.genesis_verifiers;
    const auto arrivals = s.rows().back().claims_total - genesis;
    return {cfg.cities.size() == 1 && cfg.epochs == 100 && arrivals >= 10'000 && secs < throughput_seconds,
            fmt("%.0f arrivals, %.0f epochs, %.1fs", static_cast<double>(arrivals), static_cast<double>(cfg.epochs),
                secs)};
}

} // namespace

int main(int argc, char** argv)
{
    struct Criterion {
        const char* name;
        Result (*run)();
    };
    const Criterion criteria[] = {
        {"ledger determinism and tamper evidence", ledger_determinism},
        {"EER calibration", eer_calibration},
        {"fusion arithmetic", fusion},
        {"collusion oracle", collusion},
        {"token conservation", conservation},
        {"governance tallies", governance_tallies},
        {"audit settlement", audit_settlement},
        {"invitation growth bound", invitation_bound},
        {"honest-path liveness", liveness},
        {"desk-scale throughput", throughput},
    };
    // Optional arguments select criteria by number.
    std::set<int> only;
    for (int a = 1; a < argc; ++a)
        only.insert(std::atoi(argv[a]));
    int failures = 0, i = 0;
    for (const auto& c : criteria) {
        ++i;
        if (!only.empty() && !only.count(i)) continue;
        Result r;
        const auto t0 = Clock::now();
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failures += !r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << i << ' ' << c.name << ": " << r.detail
                  << fmt(" [%.1fs]", seconds_since(t0)) << std::endl;
    }
    return failures;
}
