#include "uniqueid/params.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace uniqueid {

namespace {

constexpr std::array<std::string_view, 6> runtime_mutable{
    "certs_required", "verifier_trust_threshold", "base_stake", "recheck_quota", "identity_ttl_epochs",
    "quota_window_epochs",
};

[[noreturn]] void invalid(const std::string& what)
{
    throw ProtocolError(ErrorCode::ConfigInvalid, what);
}

void require_positive(std::int64_t v, const char* name)
{
    if (v <= 0) invalid(std::string(name) + " must be positive");
}

void require_bounds(const SizeBounds& b, const char* name)
{
    if (b.min < 1 || b.max < b.min) invalid(std::string(name) + " bounds must satisfy 1 <= min <= max");
}

std::int64_t get_int(const nlohmann::json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer())
        throw ProtocolError(ErrorCode::InvalidEvent, std::string("params field '") + key + "' missing");
    return it->get<std::int64_t>();
}

SizeBounds get_bounds(const nlohmann::json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || !it->is_array() || it->size() != 2)
        throw ProtocolError(ErrorCode::InvalidEvent, std::string("params field '") + key + "' missing");
    return {(*it)[0].get<std::int64_t>(), (*it)[1].get<std::int64_t>()};
}

} // namespace

std::int64_t to_ppm(double fraction)
{
    return static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(ppm_one)));
}

bool is_runtime_mutable(const std::string& parameter)
{
    return std::find(runtime_mutable.begin(), runtime_mutable.end(), parameter) != runtime_mutable.end();
}

void set_runtime_param(ProtocolParams& params, const std::string& parameter, std::int64_t value)
{
    if (!is_runtime_mutable(parameter))
        throw ProtocolError(ErrorCode::NotWhitelisted, parameter + " is not runtime-mutable");
    ProtocolParams next = params;
    if (parameter == "certs_required") next.certs_required = value;
    else if (parameter == "verifier_trust_threshold") next.verifier_trust_threshold = value;
    else if (parameter == "base_stake") next.monetary.base_stake = value;
    else if (parameter == "recheck_quota") next.recheck_quota = value;
    else if (parameter == "identity_ttl_epochs") next.identity_ttl_epochs = value;
    else if (parameter == "quota_window_epochs") next.quota_window_epochs = value;
    validate(next);
    params = std::move(next);
}

void validate(const ProtocolParams& p)
{
    require_positive(p.certs_required, "certs_required");
    if (p.max_reassignments < 0) invalid("max_reassignments must be non-negative");
    if (p.verifier_trust_threshold < 0) invalid("verifier_trust_threshold must be non-negative");
    for (const auto& [city, t] : p.city_trust_threshold)
        if (t < 0) invalid("city trust threshold for " + city + " must be non-negative");
    if (p.invitations_per_user < 0) invalid("invitations_per_user must be non-negative");
    if (p.sponsor_quota < 0) invalid("sponsor_quota must be non-negative");
    require_positive(p.sponsor_window_epochs, "sponsor_window_epochs");
    if (p.recheck_quota < 0) invalid("recheck_quota must be non-negative");
    require_positive(p.quota_window_epochs, "quota_window_epochs");
    require_positive(p.identity_ttl_epochs, "identity_ttl_epochs");
    require_positive(p.suspension_epochs, "suspension_epochs");
    if (p.ajudge_deadline_epochs < 0) invalid("ajudge_deadline_epochs must be non-negative");
    if (p.rep_retention_ppm < 0 || p.rep_retention_ppm > ppm_one) invalid("rep_retention must be in [0,1]");
    require_bounds(p.community, "community");
    require_bounds(p.layer2_group, "layer2_group");
    require_bounds(p.layer3_group, "layer3_group");
    for (const auto& [name, t] : p.importance_classes) {
        if (t.layer1 < 0 || t.layer3 > ppm_one || t.layer1 > t.layer2 || t.layer2 > t.layer3)
            invalid("thresholds of class " + name + " must be non-decreasing within [0,1]");
    }
    const auto& m = p.monetary;
    require_positive(m.a, "a");
    require_positive(m.x, "x");
    require_positive(m.base_stake, "base_stake");
    require_positive(m.verifier_stake, "verifier_stake");
    require_positive(m.ajudge_reward, "ajudge_reward");
    require_positive(m.mint_user_weight, "mint_user_weight");
    if (m.mint_verifier_weight < 0) invalid("mint_verifier_weight must be non-negative");
}

nlohmann::json to_json(const ProtocolParams& p)
{
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [name, t] : p.importance_classes)
        classes[name] = {t.layer1, t.layer2, t.layer3};
    nlohmann::json cities = nlohmann::json::object();
    for (const auto& [city, t] : p.city_trust_threshold)
        cities[city] = t;
    const auto& m = p.monetary;
    return {
        {"certs_required", p.certs_required},
        {"max_reassignments", p.max_reassignments},
        {"verifier_trust_threshold", p.verifier_trust_threshold},
        {"city_trust_threshold", cities},
        {"invitations_per_user", p.invitations_per_user},
        {"sponsor_quota", p.sponsor_quota},
        {"sponsor_window_epochs", p.sponsor_window_epochs},
        {"recheck_quota", p.recheck_quota},
        {"quota_window_epochs", p.quota_window_epochs},
        {"identity_ttl_epochs", p.identity_ttl_epochs},
        {"suspension_epochs", p.suspension_epochs},
        {"ajudge_deadline_epochs", p.ajudge_deadline_epochs},
        {"ajudge_unanimous", p.ajudge_unanimous},
        {"rep_retention_ppm", p.rep_retention_ppm},
        {"community", {p.community.min, p.community.max}},
        {"layer2_group", {p.layer2_group.min, p.layer2_group.max}},
        {"layer3_group", {p.layer3_group.min, p.layer3_group.max}},
        {"importance_classes", classes},
        {"a", m.a},
        {"x", m.x},
        {"base_stake", m.base_stake},
        {"verifier_stake", m.verifier_stake},
        {"ajudge_reward", m.ajudge_reward},
        {"mint_user_weight", m.mint_user_weight},
        {"mint_verifier_weight", m.mint_verifier_weight},
    };
}

ProtocolParams protocol_params_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw ProtocolError(ErrorCode::InvalidEvent, "params must be an object");
    ProtocolParams p;
    p.certs_required = get_int(j, "certs_required");
    p.max_reassignments = get_int(j, "max_reassignments");
    p.verifier_trust_threshold = get_int(j, "verifier_trust_threshold");
    p.city_trust_threshold.clear();
    for (const auto& [city, t] : j.at("city_trust_threshold").items())
        p.city_trust_threshold[city] = t.get<std::int64_t>();
    p.invitations_per_user = get_int(j, "invitations_per_user");
    p.sponsor_quota = get_int(j, "sponsor_quota");
    p.sponsor_window_epochs = get_int(j, "sponsor_window_epochs");
    p.recheck_quota = get_int(j, "recheck_quota");
    p.quota_window_epochs = get_int(j, "quota_window_epochs");
    p.identity_ttl_epochs = get_int(j, "identity_ttl_epochs");
    p.suspension_epochs = get_int(j, "suspension_epochs");
    p.ajudge_deadline_epochs = get_int(j, "ajudge_deadline_epochs");
    p.ajudge_unanimous = j.at("ajudge_unanimous").get<bool>();
    p.rep_retention_ppm = get_int(j, "rep_retention_ppm");
    p.community = get_bounds(j, "community");
    p.layer2_group = get_bounds(j, "layer2_group");
    p.layer3_group = get_bounds(j, "layer3_group");
    p.importance_classes.clear();
    for (const auto& [name, t] : j.at("importance_classes").items())
        p.importance_classes[name] = {t.at(0).get<std::int64_t>(), t.at(1).get<std::int64_t>(),
                                      t.at(2).get<std::int64_t>()};
    auto& m = p.monetary;
    m.a = get_int(j, "a");
    m.x = get_int(j, "x");
    m.base_stake = get_int(j, "base_stake");
    m.verifier_stake = get_int(j, "verifier_stake");
    m.ajudge_reward = get_int(j, "ajudge_reward");
    m.mint_user_weight = get_int(j, "mint_user_weight");
    m.mint_verifier_weight = get_int(j, "mint_verifier_weight");
    return p;
}

} // namespace uniqueid
