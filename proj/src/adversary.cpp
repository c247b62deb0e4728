#include "uniqueid/adversary.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace uniqueid::adversary {

namespace {

[[noreturn]] void bad_plan(const std::string& detail)
{
    throw ProtocolError(ErrorCode::ConfigInvalid, "adversary." + detail);
}

constexpr std::pair<Strategy, std::string_view> strategy_names[] = {
    {Strategy::FakeIdentityFactory, "FakeIdentityFactory"},
    {Strategy::DuplicateEnrollment, "DuplicateEnrollment"},
    {Strategy::StakeGrinding, "StakeGrinding"},
    {Strategy::AuditEvasion, "AuditEvasion"},
};

} // namespace

std::string_view to_string(Strategy s)
{
    for (const auto& [k, name] : strategy_names)
        if (k == s) return name;
    return "?";
}

std::optional<Strategy> strategy_from_string(std::string_view s)
{
    for (const auto& [k, name] : strategy_names)
        if (name == s) return k;
    return std::nullopt;
}

void validate(const AdversaryPlan& p)
{
    if (p.attempts < 1) bad_plan("attempts must be at least 1");
    if (p.corrupt_count < 0) bad_plan("corrupt_count must be non-negative");
    for (auto i : p.corrupt_indices)
        if (i < 0) bad_plan("corrupt_indices must be non-negative");
    if (p.bribe_cost_per_verifier < 0) bad_plan("bribe_cost_per_verifier must be non-negative");
    if (p.budget < 0) bad_plan("budget must be non-negative");
    if (p.attempts_per_epoch < 1) bad_plan("attempts_per_epoch must be at least 1");
    if (p.start_epoch < 1) bad_plan("start_epoch must be at least 1");
    if (p.observation_epochs < 0) bad_plan("observation_epochs must be non-negative");
    if (p.batch_size < 1) bad_plan("batch_size must be at least 1");
    if (!(p.detection_probability >= 0.0 && p.detection_probability <= 1.0))
        bad_plan("detection_probability must lie in [0, 1]");
}

AdversaryPlan plan_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) bad_plan("must be an object");
    static const char* const known[] = {"strategy",      "city",           "corrupt_count",      "corrupt_indices",
                                        "bribe_cost_per_verifier", "attempts", "budget",         "grinding",
                                        "attempts_per_epoch", "start_epoch", "appear_at_audit",  "audit_successes",
                                        "observation_epochs", "batch_size", "detection_probability"};
    for (const auto& [key, _] : j.items())
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
            bad_plan(key + " is not a known field");

    AdversaryPlan p;
    try {
        if (j.contains("strategy")) {
            auto s = strategy_from_string(j.at("strategy").get<std::string>());
            if (!s) bad_plan("strategy is unknown");
            p.strategy = *s;
        }
        p.city = j.value("city", p.city);
        p.corrupt_count = j.value("corrupt_count", p.corrupt_count);
        p.corrupt_indices = j.value("corrupt_indices", p.corrupt_indices);
        p.bribe_cost_per_verifier = j.value("bribe_cost_per_verifier", p.bribe_cost_per_verifier);
        p.attempts = j.value("attempts", p.attempts);
        p.budget = j.value("budget", p.budget);
        p.grinding = j.value("grinding", p.grinding);
        p.attempts_per_epoch = j.value("attempts_per_epoch", p.attempts_per_epoch);
        p.start_epoch = j.value("start_epoch", p.start_epoch);
        p.appear_at_audit = j.value("appear_at_audit", p.appear_at_audit);
        p.audit_successes = j.value("audit_successes", p.audit_successes);
        p.observation_epochs = j.value("observation_epochs", p.observation_epochs);
        p.batch_size = j.value("batch_size", p.batch_size);
        p.detection_probability = j.value("detection_probability", p.detection_probability);
    } catch (const nlohmann::json::exception& e) {
        bad_plan(std::string("field has the wrong type: ") + e.what());
    }
    validate(p);
    return p;
}

nlohmann::json to_json(const AdversaryPlan& p)
{
    return {{"strategy", std::string(to_string(p.strategy))},
            {"city", p.city},
            {"corrupt_count", p.corrupt_count},
            {"corrupt_indices", p.corrupt_indices},
            {"bribe_cost_per_verifier", p.bribe_cost_per_verifier},
            {"attempts", p.attempts},
            {"budget", p.budget},
            {"grinding", p.grinding},
            {"attempts_per_epoch", p.attempts_per_epoch},
            {"start_epoch", p.start_epoch},
            {"appear_at_audit", p.appear_at_audit},
            {"audit_successes", p.audit_successes},
            {"observation_epochs", p.observation_epochs},
            {"batch_size", p.batch_size},
            {"detection_probability", p.detection_probability}};
}

void AttackReport::finalize()
{
    tokens_spent = bribes + forfeited + slashed;
    auto t = detection_times;
    std::sort(t.begin(), t.end());
    time_to_detection = {};
    time_to_detection.count = static_cast<std::int64_t>(t.size());
    if (t.empty()) return;
    time_to_detection.min = t.front();
    time_to_detection.max = t.back();
    time_to_detection.median = t[t.size() / 2];
    time_to_detection.mean =
        static_cast<double>(std::accumulate(t.begin(), t.end(), std::int64_t{0})) / static_cast<double>(t.size());
}

void merge_into(AttackReport& total, const AttackReport& b)
{
    total.strategy = b.strategy;
    total.attempts += b.attempts;
    total.reached_verified += b.reached_verified;
    total.successes += b.successes;
    total.detected += b.detected;
    total.rejected += b.rejected;
    total.dedup_flagged += b.dedup_flagged;
    total.collusion_size = b.collusion_size;
    // Bribes are paid once per campaign, not per batch.
    total.bribes = b.bribes;
    total.forfeited += b.forfeited;
    total.slashed += b.slashed;
    total.budget_exhausted = total.budget_exhausted || b.budget_exhausted;
    total.detection_times.insert(total.detection_times.end(), b.detection_times.begin(), b.detection_times.end());
}

nlohmann::json to_json(const AttackReport& r)
{
    return {{"strategy", std::string(to_string(r.strategy))},
            {"attempts", r.attempts},
            {"reached_verified", r.reached_verified},
            {"successes", r.successes},
            {"detected", r.detected},
            {"rejected", r.rejected},
            {"dedup_flagged", r.dedup_flagged},
            {"collusion_size", r.collusion_size},
            {"bribes", r.bribes},
            {"forfeited", r.forfeited},
            {"slashed", r.slashed},
            {"tokens_spent", r.tokens_spent},
            {"budget_exhausted", r.budget_exhausted},
            {"success_rate", r.success_rate()},
            {"time_to_detection",
             {{"count", r.time_to_detection.count},
              {"mean", r.time_to_detection.mean},
              {"min", r.time_to_detection.min},
              {"max", r.time_to_detection.max},
              {"median", r.time_to_detection.median}}}};
}

double probability_all_assigned_corrupt(std::int64_t n, std::int64_t k, std::int64_t c)
{
    if (n < 0 || k < 0 || c < 0 || k > n || c > n)
        throw ProtocolError(ErrorCode::InvalidCounts,
                            "N=" + std::to_string(n) + " k=" + std::to_string(k) + " c=" + std::to_string(c));
    if (k < c) return 0.0;
    long double p = 1.0L;
    for (std::int64_t i = 0; i < c; ++i)
        p *= static_cast<long double>(k - i) / static_cast<long double>(n - i);
    return static_cast<double>(p);
}

double probability_with_grinding(std::int64_t n, std::int64_t k, std::int64_t c, std::int64_t max_rejections)
{
    if (max_rejections < 0) throw ProtocolError(ErrorCode::InvalidCounts, "max_rejections must be non-negative");
    probability_all_assigned_corrupt(n, k, c); // validates the counts
    if (k < c) return 0.0;
    // f[j][h]: success probability with j corrupt certificates and h rejections so far.
    const auto R = static_cast<std::size_t>(max_rejections);
    std::vector<std::vector<long double>> f(static_cast<std::size_t>(c) + 1, std::vector<long double>(R + 1, 0.0L));
    for (std::size_t h = 0; h <= R; ++h)
        f[static_cast<std::size_t>(c)][h] = 1.0L;
    for (std::int64_t j = c - 1; j >= 0; --j) {
        const long double p = static_cast<long double>(k - j) / static_cast<long double>(n - j);
        const auto jj = static_cast<std::size_t>(j);
        for (std::size_t h = R + 1; h-- > 0;)
            f[jj][h] = p * f[jj + 1][h] + (h < R ? (1.0L - p) * f[jj][h + 1] : 0.0L);
    }
    return static_cast<double>(f[0][0]);
}

bool CorruptBehavior::certify(const PersonId& verifier, const PersonId& subject, bool honest_match) const
{
    return corrupted_.count(verifier) ? true : VerifierBehavior::certify(verifier, subject, honest_match);
}

bool CorruptBehavior::ajudge_vote(const PersonId& verifier, const PersonId& target, bool honest_genuine) const
{
    if (corrupted_.count(verifier) && targets_ && targets_->count(target)) return true;
    return VerifierBehavior::ajudge_vote(verifier, target, honest_genuine);
}

bool CorruptBehavior::dedup_vote(const PersonId& verifier, const PersonId& subject, bool honest_duplicate) const
{
    if (corrupted_.count(verifier) && targets_ && targets_->count(subject)) return false;
    return VerifierBehavior::dedup_vote(verifier, subject, honest_duplicate);
}

} // namespace uniqueid::adversary
