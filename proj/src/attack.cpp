#include "uniqueid/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace uniqueid::adversary {

unsigned thread_count_from_env()
{
    unsigned n = 0;
    if (const char* env = std::getenv("UNIQUEID_SIM_THREADS")) n = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

AttackReport run_attack(const sim::ScenarioConfig& scenario, const AttackOptions& options)
{
    if (!scenario.adversary) throw ProtocolError(ErrorCode::ConfigInvalid, "the scenario has no adversary plan");
    sim::validate(scenario);
    const auto& plan = *scenario.adversary;
    if (plan.budget < scenario.params.monetary.base_stake)
        throw ProtocolError(ErrorCode::BudgetExceeded, "the adversary budget cannot fund a single stake-gated claim");

    // One calibration shared by every batch.
    sim::ScenarioConfig base = scenario;
    if (!base.tau) {
        Rng cal(mix_seed(scenario.seed, 1));
        base.tau = biometric::calibrate_tau(scenario.policy, scenario.calibration_pairs, cal, scenario.target_eer).tau;
    }
    base.collect_metrics = false;

    const std::int64_t batches = (plan.attempts + plan.batch_size - 1) / plan.batch_size;
    std::vector<AttackReport> reports(static_cast<std::size_t>(batches));
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const auto b = next.fetch_add(1);
            if (b >= batches) return;
            try {
                sim::ScenarioConfig cfg = base;
                cfg.seed = mix_seed(scenario.seed, static_cast<std::uint64_t>(b));
                auto& p = *cfg.adversary;
                p.attempts = std::min(plan.batch_size, plan.attempts - b * plan.batch_size);
                // Each attempt needs at most certs_required + max_reassignments steps.
                const std::int64_t per_attempt = scenario.params.certs_required + scenario.params.max_reassignments + 2;
                const std::int64_t max_epochs = options.max_epochs > 0
                                                    ? options.max_epochs
                                                    : p.start_epoch + p.attempts / p.attempts_per_epoch + per_attempt
                                                          + p.observation_epochs + 4 * scenario.params.ajudge_deadline_epochs;
                sim::Simulator s(cfg);
                s.run_attack_campaign(max_epochs);
                reports[static_cast<std::size_t>(b)] = s.attack_report();
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = batches;
                return;
            }
        }
    };

    const unsigned threads =
        std::min<unsigned>(options.threads ? options.threads : thread_count_from_env(), static_cast<unsigned>(batches));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (error) std::rethrow_exception(error);

    AttackReport total;
    for (const auto& r : reports)
        merge_into(total, r);
    total.strategy = plan.strategy;
    total.finalize();
    return total;
}

CollusionCurve min_collusion_curve(const sim::ScenarioConfig& scenario, double target)
{
    const adversary::AdversaryPlan plan = scenario.adversary.value_or(AdversaryPlan{});
    const std::string city = plan.city.empty() ? scenario.cities.front().id : plan.city;
    auto it = std::find_if(scenario.cities.begin(), scenario.cities.end(), [&](const auto& c) { return c.id == city; });
    if (it == scenario.cities.end()) throw ProtocolError(ErrorCode::ConfigInvalid, "unknown city " + city);
    const std::int64_t n = it->genesis_verifiers;
    const std::int64_t c = scenario.params.certs_required;
    const auto stake = static_cast<double>(scenario.params.monetary.verifier_stake);

    CollusionCurve curve;
    for (std::int64_t k = c; k <= n; ++k) {
        CurvePoint pt;
        pt.k = k;
        pt.success_prob = plan.grinding ? probability_with_grinding(n, k, c, scenario.params.max_reassignments)
                                        : probability_all_assigned_corrupt(n, k, c);
        pt.expected_cost = static_cast<double>(k * plan.bribe_cost_per_verifier)
                           + pt.success_prob * plan.detection_probability * static_cast<double>(c) * stake;
        if (!curve.min_k && pt.success_prob >= target) curve.min_k = k;
        curve.points.push_back(pt);
    }
    return curve;
}

} // namespace uniqueid::adversary
