#pragma once

#include "uniqueid/biometric.hpp"
#include "uniqueid/ledger.hpp"
#include "uniqueid/state.hpp"

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace uniqueid {

/// How a verifier turns the honest observation into a verdict. The default
/// is honest; the adversary module installs overrides for corrupted actors.
class VerifierBehavior {
public:
    virtual ~VerifierBehavior() = default;

    virtual bool certify(const PersonId& verifier, const PersonId& subject, bool honest_match) const;
    virtual bool ajudge_vote(const PersonId& verifier, const PersonId& target, bool honest_genuine) const;
    virtual bool dedup_vote(const PersonId& verifier, const PersonId& subject, bool honest_duplicate) const;
};

struct ClaimResult {
    std::vector<Digest> flagged; // dedup collisions; non-empty => adjudication required
    std::optional<PersonId> assignee;
};

struct CertificateResult {
    bool accepted = false;
    bool verified = false;
    std::optional<PersonId> next_assignee;
};

/// The reading whoever appears for an identity produces in front of one
/// verifier.
using PresentFn = std::function<biometric::BiometricTemplate(const PersonId& verifier)>;

/// Command layer over the event-sourced state. Each event is applied to the
/// state first and appended to the ledger only if it was accepted, so the
/// two never diverge. Commands check their preconditions before their first
/// event.
class Protocol {
public:
    explicit Protocol(biometric::MatchPolicy policy);

    const Ledger& ledger() const { return ledger_; }
    const ApplicationState& state() const { return state_; }
    Epoch epoch() const { return state_.epoch; }
    const biometric::MatchPolicy& policy() const { return index_.policy(); }
    const biometric::DedupIndex& dedup_index() const { return index_; }
    const biometric::BiometricTemplate& claimed_template(const PersonId& pk) const;

    void set_behavior(std::shared_ptr<const VerifierBehavior> behavior);

    // Genesis.
    void initialize(const ProtocolParams& params, std::uint64_t seed, const Json& info = Json::object());
    void allocate(const std::vector<Credit>& allocations);
    void genesis_identity(const PersonId& pk, const std::string& city, const biometric::BiometricTemplate& tmpl);
    void lock_verifier_stake(const PersonId& pk);
    void register_verifier(const PersonId& pk);
    void bootstrap_trust(const PersonId& pk, std::int64_t weight);

    /// Next epoch: beacon step, then any parameter change due at the boundary.
    void advance_epoch();

    void transfer(const PersonId& from, const PersonId& to, Amount amount);
    void delegate(const PersonId& from, const PersonId& to);

    // Registry.
    ClaimResult claim_identity(const PersonId& pk, const biometric::BiometricTemplate& tmpl, const std::string& city,
                               GateKind gate, std::optional<PersonId> ref = std::nullopt);
    /// Panel vote on a dedup flag. Returns true (and revokes) if judged a
    /// duplicate; otherwise assigns the first verifier.
    bool resolve_dedup(const PersonId& pk, const std::function<bool(const PersonId& verifier)>& honest_duplicate);
    PersonId assign_next_verifier(const PersonId& pk);
    CertificateResult submit_certificate(const PersonId& verifier, const PersonId& pk,
                                         const biometric::BiometricTemplate& presented);
    PersonId request_reassignment(const PersonId& pk);
    /// Terminal failure of a pending claim: revoked, entry stake forfeited.
    void abandon_claim(const PersonId& pk);
    void declare_trust_circle(const PersonId& pk, const std::vector<PersonId>& members);
    void recover_identity(const PersonId& pk, const PersonId& new_pk, const std::vector<PersonId>& approvals);
    PersonId renewal_verifier(const PersonId& pk) const;
    bool renew_identity(const PersonId& pk, const biometric::BiometricTemplate& presented);
    std::vector<PersonId> expire_due();
    /// Voids every in-flight assignment whose verifier is no longer eligible.
    std::vector<PersonId> void_stale_assignments();

    // Audit.
    std::int64_t call_ajudge(const PersonId& caller, const PersonId& target);
    std::int64_t random_check(const PersonId& target);
    AJudgeVerdict adjudicate(std::int64_t call_id, const PresentFn& present);
    /// MissedDeadline verdicts for open calls whose deadline has passed.
    std::vector<std::int64_t> miss_deadlines();
    /// Revocation, slashing and suspension owed by a closed call.
    Settlement settle_audit(std::int64_t call_id);
    /// Mints every A-judge reward owed; returns the rewarded identities.
    std::vector<PersonId> settle_rewards();

    // Governance.
    std::size_t form_communities();
    std::size_t form_layer(int layer); // layer 2 or 3
    governance::Election elect(int layer, std::size_t group);
    void invalidate(int layer, std::size_t group);
    std::int64_t open_proposal(const PersonId& opener, const std::string& importance_class,
                               const std::string& parameter, std::int64_t value);
    governance::ProposalStatus tally_proposal(std::int64_t id, const std::array<governance::LayerBallots, 3>& ballots);

private:
    const Event& commit(EventKind kind, Json payload);
    const Event& commit_at(EventKind kind, Json payload, Epoch epoch);
    void index_verified(const PersonId& pk);
    void unindex(const PersonId& pk);
    void revoke(const PersonId& pk, const std::string& reason);
    PersonId assign(const PersonId& pk, bool reassignment);

    Ledger ledger_;
    ApplicationState state_;
    biometric::DedupIndex index_;
    std::map<Digest, biometric::BiometricTemplate> templates_;
    std::shared_ptr<const VerifierBehavior> behavior_;
};

} // namespace uniqueid
