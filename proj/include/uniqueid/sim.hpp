#pragma once

#include "uniqueid/adversary.hpp"
#include "uniqueid/biometric.hpp"
#include "uniqueid/params.hpp"
#include "uniqueid/protocol.hpp"
#include "uniqueid/rng.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace uniqueid::sim {

struct CityConfig {
    std::string id;
    std::int64_t genesis_verifiers = 0;
    double arrival_rate = 0.0;      // honest arrivals per epoch
    std::int64_t max_arrivals = -1; // total cap; negative = unlimited
};

struct ProposalPlan {
    Epoch epoch = 0; // opened during this epoch's governance phase
    std::string importance_class = "critical";
    std::string parameter;
    std::int64_t value = 0;
    double approve_probability = 1.0;
    double abstain_probability = 0.0;
    std::int64_t voting_epochs = 1; // tallied this many epochs after opening
};

struct GovernanceConfig {
    bool enabled = true;
    std::int64_t interval_epochs = 4;
    double delegation_rate = 0.9;
    std::int64_t candidates_per_community = 3;
    std::vector<ProposalPlan> proposals;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::int64_t epochs = 10;
    std::vector<CityConfig> cities; // kept sorted by id
    ProtocolParams params;
    std::vector<std::pair<std::string, Amount>> ico_allocations; // label -> amount, sorted by label

    double random_check_rate = 0.0; // probability per epoch of one system re-check
    double honest_call_rate = 0.0;  // per eligible verifier per epoch
    double arrival_jitter = 0.0;    // relative, in [0, 1)
    std::vector<GateKind> gate_order{GateKind::Invitation, GateKind::VerifierSponsor, GateKind::Stake};
    std::int64_t renewal_lead_epochs = 2;
    double renewal_rate = 1.0; // probability an honest holder renews in a given epoch of the lead window

    biometric::MatchPolicy policy;
    double target_eer = 0.02;
    std::uint64_t calibration_pairs = 100'000;
    std::optional<double> tau; // skips calibration when set

    GovernanceConfig governance;
    std::optional<adversary::AdversaryPlan> adversary;
    bool collect_metrics = true;
};

/// Validates and fills defaults. Throws ProtocolError(ConfigInvalid).
ScenarioConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioConfig& c);

/// Throws ConfigInvalid or InsufficientGenesisVerifiers.
void validate(const ScenarioConfig& c);

struct MetricsRow {
    Epoch epoch = 0;
    std::int64_t verified = 0;
    std::int64_t pending = 0;
    std::int64_t revoked = 0;
    std::int64_t expired = 0;
    std::int64_t claims_total = 0;
    std::int64_t eligible_verifiers = 0;
    Amount circulating = 0;
    Amount minted = 0;
    Amount forfeited = 0;
    Amount slashed = 0;
    Amount locked = 0;
    double gini_balance = 0.0;
    std::int64_t calls_opened = 0;
    std::int64_t passed = 0;
    std::int64_t failed = 0;
    std::int64_t missed = 0;
    std::int64_t communities = 0;
    std::int64_t representatives_l1 = 0;
    std::int64_t representatives_l2 = 0;
    std::int64_t representatives_l3 = 0;
    std::int64_t proposals_passed = 0;
    std::int64_t proposals_failed = 0;
    std::uint64_t ledger_events = 0;
};

std::string metrics_csv_header();
std::string to_csv(const MetricsRow& row);
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

struct ScenarioResult {
    std::vector<MetricsRow> rows;
    Digest state_hash{};
    biometric::Calibration calibration;
    std::optional<adversary::AttackReport> attack;
    nlohmann::json report; // report.json contents
};

/// Deterministic epoch engine. Phases per epoch: beacon, arrivals,
/// verification steps, renewals and expiries, audits, governance,
/// settlement, metrics.
class Simulator {
public:
    /// Validates the config; calibrates tau unless the config carries one.
    explicit Simulator(ScenarioConfig config);

    /// Genesis events: parameters, allocation, genesis identities, verifier
    /// stakes and registrations, bootstrap trust and the round-robin ring.
    void genesis();
    void step();
    /// genesis() (if not done) and config.epochs steps.
    void run();
    /// For attacks: steps until every attempt is resolved and the
    /// observation window has passed, or max_epochs is reached.
    void run_attack_campaign(std::int64_t max_epochs);

    const Protocol& protocol() const { return *protocol_; }
    const ScenarioConfig& config() const { return config_; }
    const biometric::Calibration& calibration() const { return calibration_; }
    const std::vector<MetricsRow>& rows() const { return rows_; }
    const std::vector<PersonId>& genesis_verifiers(const std::string& city) const;
    const std::set<PersonId>& corrupted() const { return corrupted_; }

    /// Attack outcome so far; only meaningful with an adversary plan.
    adversary::AttackReport attack_report() const;
    bool attack_done() const;

    MetricsRow snapshot() const;
    nlohmann::json report() const;

    /// The token account behind an ICO allocation label.
    static PersonId ico_account(const std::string& label);
    static PersonId treasury_account();
    static PersonId adversary_account();

private:
    struct Person {
        PersonId pk;
        std::string city;
        std::uint64_t human = 0; // whoever appears in person for this identity
        bool adversarial = false;
    };
    struct Arrival {
        PersonId pk;
        std::string city;
        std::uint64_t human = 0;
    };
    struct Attempt {
        PersonId pk;
        Epoch launched = 0;
        std::optional<Epoch> verified;
        std::optional<Epoch> revoked;
        std::string revocation_reason;
        bool flagged = false;
        bool audited = false; // called by the system under audit_successes
    };

    void phase_arrivals();
    void phase_verification();
    void phase_renewals();
    void phase_audits();
    void phase_governance();
    void phase_settlement();

    void launch_attempts();
    void certificate_step(const PersonId& pk);
    void handle_rejection(const PersonId& pk);
    biometric::BiometricTemplate presentation(const PersonId& pk);
    void track_attempts();

    PersonId new_pk(const std::string& kind);
    std::uint64_t new_human();
    const Person* person(const PersonId& pk) const;
    void add_person(const PersonId& pk, const std::string& city, std::uint64_t human, bool adversarial,
                    const biometric::BiometricTemplate& tmpl, std::uint64_t template_source);
    std::vector<PersonId> verified_in(const std::string& city) const;

    ScenarioConfig config_;
    biometric::Calibration calibration_;
    std::unique_ptr<Protocol> protocol_;
    Rng rng_;
    bool genesis_done_ = false;
    std::uint64_t pk_counter_ = 0;
    std::uint64_t human_counter_ = 0;

    std::map<PersonId, Person> people_;
    std::map<std::uint64_t, biometric::GroundTruth> humans_;
    std::map<Digest, std::uint64_t> digest_source_; // template digest -> human it was read from
    std::map<PersonId, std::vector<Digest>> pending_flags_;
    std::map<std::string, std::int64_t> arrived_;
    std::map<std::string, std::vector<PersonId>> genesis_verifiers_;
    std::map<std::string, double> arrival_carry_;
    std::vector<Arrival> queue_;
    std::map<std::string, std::set<PersonId>> inviters_;

    std::vector<std::int64_t> open_calls_;
    std::vector<std::int64_t> closed_calls_;
    std::map<std::int64_t, std::pair<Epoch, std::int64_t>> proposals_due_; // id -> (tally epoch, plan index)
    std::vector<std::string> governance_log_;

    // Adversary.
    std::set<PersonId> corrupted_;
    std::shared_ptr<std::set<PersonId>> targets_;
    std::vector<Attempt> attempts_;
    std::map<PersonId, std::size_t> attempt_index_;
    std::uint64_t stand_in_ = 0; // the human who appears for fake identities
    std::vector<std::size_t> active_attempts_;
    std::int64_t launched_ = 0;
    bool budget_exhausted_ = false;
    Epoch campaign_resolved_ = -1;

    std::vector<MetricsRow> rows_;
};

/// Runs genesis and every epoch. When out_dir is non-empty, writes
/// ledger.jsonl, metrics.csv and report.json there.
ScenarioResult run_scenario(const ScenarioConfig& config, const std::string& out_dir = {});

} // namespace uniqueid::sim
