#pragma once

#include "uniqueid/common.hpp"

#include <map>
#include <string>

#include <json.hpp>

namespace uniqueid {

/// Fractions are carried as integer parts-per-million so that every
/// threshold comparison in the ledger is exact.
inline constexpr std::int64_t ppm_one = 1'000'000;

std::int64_t to_ppm(double fraction);

/// Per-layer supermajority thresholds (layer 1, 2, 3), in ppm.
struct ThresholdTriple {
    std::int64_t layer1 = 0;
    std::int64_t layer2 = 0;
    std::int64_t layer3 = 0;

    bool operator==(const ThresholdTriple&) const = default;
};

struct MonetaryParams {
    Amount a = 1000;              // fairness horizon, in users
    Amount x = 100;               // minted per newly verified user
    Amount base_stake = 10;
    Amount verifier_stake = 100;
    Amount ajudge_reward = 20;
    std::int64_t mint_user_weight = 1;     // split weights of the per-user mint
    std::int64_t mint_verifier_weight = 1;

    Amount genesis_supply() const { return a * x; }
};

struct SizeBounds {
    std::int64_t min = 0;
    std::int64_t max = 0;
};

/// Every protocol tunable the ledger needs to validate events. Carried in
/// the genesis event and modified only through ParameterChanged.
struct ProtocolParams {
    std::int64_t certs_required = 3;
    std::int64_t max_reassignments = 3;
    std::int64_t verifier_trust_threshold = 10;
    std::map<std::string, std::int64_t> city_trust_threshold;
    std::int64_t invitations_per_user = 2;
    std::int64_t sponsor_quota = 5;
    std::int64_t sponsor_window_epochs = 30;
    std::int64_t recheck_quota = 2;
    std::int64_t quota_window_epochs = 4;
    std::int64_t identity_ttl_epochs = 52;
    std::int64_t suspension_epochs = 26;
    std::int64_t ajudge_deadline_epochs = 2;
    bool ajudge_unanimous = false;
    std::int64_t rep_retention_ppm = 800'000;
    SizeBounds community{50, 100};
    SizeBounds layer2_group{30, 40};
    SizeBounds layer3_group{20, 30};
    std::map<std::string, ThresholdTriple> importance_classes{
        {"critical", {680'000, 850'000, 950'000}},
        {"routine", {510'000, 600'000, 660'000}}, // invented default
    };
    MonetaryParams monetary;

    std::int64_t trust_threshold_for(const std::string& city) const
    {
        auto it = city_trust_threshold.find(city);
        return it == city_trust_threshold.end() ? verifier_trust_threshold : it->second;
    }
};

/// Parameters a passed governance proposal may change at runtime.
bool is_runtime_mutable(const std::string& parameter);

/// Applies a whitelisted change; throws ProtocolError(NotWhitelisted) or
/// ProtocolError(ConfigInvalid) for an out-of-range value.
void set_runtime_param(ProtocolParams& params, const std::string& parameter, std::int64_t value);

/// Throws ProtocolError(ConfigInvalid) naming the first violated bound.
void validate(const ProtocolParams& params);

nlohmann::json to_json(const ProtocolParams& params);
ProtocolParams protocol_params_from_json(const nlohmann::json& j);

} // namespace uniqueid
