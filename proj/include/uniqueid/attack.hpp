#pragma once

#include "uniqueid/adversary.hpp"
#include "uniqueid/sim.hpp"

#include <optional>
#include <vector>

namespace uniqueid::adversary {

struct AttackOptions {
    unsigned threads = 0;           // 0 = UNIQUEID_SIM_THREADS, else hardware concurrency
    std::int64_t max_epochs = 0;    // per batch; 0 = derived from the plan
};

/// Parallelism from UNIQUEID_SIM_THREADS (0 or unset = hardware concurrency).
unsigned thread_count_from_env();

/// Runs the scenario's adversary plan against the full simulator in
/// independent batches of plan.batch_size attempts. Batch b uses seed
/// mix_seed(scenario.seed, b) and owns its simulator, so the report does not
/// depend on the number of threads. Throws BudgetExceeded when the plan
/// cannot fund one claim, ConfigInvalid when the scenario has no plan.
AttackReport run_attack(const sim::ScenarioConfig& scenario, const AttackOptions& options = {});

struct CurvePoint {
    std::int64_t k = 0;
    double success_prob = 0.0;
    double expected_cost = 0.0; // k * bribe + expected slashing losses
};

struct CollusionCurve {
    std::vector<CurvePoint> points;  // k = c .. N
    std::optional<std::int64_t> min_k; // smallest k reaching the target
};

/// Closed form for k = c..N in the plan's city: all-corrupt probability
/// (with the reassignment cap when the plan grinds) and cost
/// k * bribe + P(success) * detection_probability * c * verifier_stake.
CollusionCurve min_collusion_curve(const sim::ScenarioConfig& scenario, double target_success_prob);

} // namespace uniqueid::adversary
