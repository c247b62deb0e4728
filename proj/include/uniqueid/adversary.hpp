#pragma once

#include "uniqueid/common.hpp"
#include "uniqueid/protocol.hpp"

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace uniqueid::adversary {

enum class Strategy { FakeIdentityFactory, DuplicateEnrollment, StakeGrinding, AuditEvasion };

std::string_view to_string(Strategy s);
std::optional<Strategy> strategy_from_string(std::string_view s);

struct AdversaryPlan {
    Strategy strategy = Strategy::FakeIdentityFactory;
    std::string city;                    // where the attack runs; default is the first city
    std::int64_t corrupt_count = 0;      // verifiers bribed in that city
    std::vector<std::int64_t> corrupt_indices; // explicit genesis verifier indices; overrides corrupt_count
    Amount bribe_cost_per_verifier = 0;  // paid off-ledger
    std::int64_t attempts = 1;
    Amount budget = 0;                   // in-ledger tokens allocated to the adversary at genesis
    bool grinding = false;               // reject-and-retry within max_reassignments
    std::int64_t attempts_per_epoch = 1;
    std::int64_t start_epoch = 1;
    bool appear_at_audit = true;         // a fake shows up (with a stand-in) when audited
    bool audit_successes = false;        // every newly verified fake is called by the system
    std::int64_t observation_epochs = 0; // epochs simulated after the last attempt resolves
    std::int64_t batch_size = 1000;      // attempts per independent simulator instance
    double detection_probability = 1.0;  // used by the closed-form cost curve only
};

/// Throws ProtocolError(ConfigInvalid).
void validate(const AdversaryPlan& plan);
AdversaryPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdversaryPlan& plan);

struct DetectionSummary {
    std::int64_t count = 0;
    double mean = 0.0;
    std::int64_t min = 0;
    std::int64_t max = 0;
    std::int64_t median = 0;
};

struct AttackReport {
    Strategy strategy = Strategy::FakeIdentityFactory;
    std::int64_t attempts = 0;
    std::int64_t reached_verified = 0; // ever Verified
    std::int64_t successes = 0;        // Verified and still standing at the final epoch
    std::int64_t detected = 0;         // caught by dedup adjudication or an audit
    std::int64_t rejected = 0;         // failed verification and abandoned
    std::int64_t dedup_flagged = 0;
    std::int64_t collusion_size = 0;
    Amount bribes = 0;
    Amount forfeited = 0;
    Amount slashed = 0;
    Amount tokens_spent = 0; // bribes + forfeited + slashed
    bool budget_exhausted = false;
    std::vector<std::int64_t> detection_times; // epochs from Verified to revocation
    DetectionSummary time_to_detection;

    void finalize(); // fills tokens_spent and time_to_detection
    double success_rate() const { return attempts ? static_cast<double>(reached_verified) / attempts : 0.0; }
};

/// Sums batch reports; call finalize() on the result.
void merge_into(AttackReport& total, const AttackReport& batch);
nlohmann::json to_json(const AttackReport& r);

/// C(k, c) / C(N, c): probability that c sequentially assigned distinct
/// verifiers drawn from N eligible ones are all among the k corrupted.
/// Throws ProtocolError(InvalidCounts).
double probability_all_assigned_corrupt(std::int64_t n_eligible, std::int64_t k_corrupt, std::int64_t c_required);

/// Same event with up to max_rejections honest draws tolerated: each honest
/// draw is a rejection followed by a reassignment that still excludes only
/// the verifiers who already certified.
double probability_with_grinding(std::int64_t n_eligible, std::int64_t k_corrupt, std::int64_t c_required,
                                 std::int64_t max_rejections);

/// Corrupted verifiers accept anything they are asked to certify and side
/// with the adversary's own identities in adjudications.
class CorruptBehavior : public VerifierBehavior {
public:
    CorruptBehavior(std::set<PersonId> corrupted, std::shared_ptr<const std::set<PersonId>> targets)
        : corrupted_(std::move(corrupted)), targets_(std::move(targets))
    {
    }

    bool certify(const PersonId& verifier, const PersonId& subject, bool honest_match) const override;
    bool ajudge_vote(const PersonId& verifier, const PersonId& target, bool honest_genuine) const override;
    bool dedup_vote(const PersonId& verifier, const PersonId& subject, bool honest_duplicate) const override;

    const std::set<PersonId>& corrupted() const { return corrupted_; }

private:
    std::set<PersonId> corrupted_;
    std::shared_ptr<const std::set<PersonId>> targets_;
};

} // namespace uniqueid::adversary
