#pragma once

#include "uniqueid/protocol.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace uniqueid::testing {

// The default synthetic model at its equal-error threshold (oracles.py).
inline biometric::MatchPolicy default_policy()
{
    biometric::MatchPolicy p;
    p.tau = 0.73980596;
    return p;
}

struct FusedRates {
    double false_flag = 0.0; // impostor templates matched under k-of-n fusion
    double miss = 0.0;       // genuine re-readings not matched
};

/// Template-level Monte Carlo: per pair, two readings of one person and one
/// reading of another.
inline FusedRates fused_rates(const biometric::MatchPolicy& policy, std::uint64_t n_pairs, Rng& rng)
{
    std::uint64_t flags = 0, misses = 0;
    for (std::uint64_t i = 0; i < n_pairs; ++i) {
        const auto a = biometric::generate_person_ground_truth(policy, rng);
        const auto b = biometric::generate_person_ground_truth(policy, rng);
        const auto a1 = biometric::sample_template(a, policy, rng);
        const auto a2 = biometric::sample_template(a, policy, rng);
        const auto b1 = biometric::sample_template(b, policy, rng);
        if (!biometric::match_template(a1, a2, policy)) ++misses;
        if (biometric::match_template(a1, b1, policy)) ++flags;
    }
    const auto n = static_cast<double>(n_pairs);
    return {static_cast<double>(flags) / n, static_cast<double>(misses) / n};
}

/// Fraction of ordered c-tuples of distinct verifiers out of n that land
/// entirely inside the first k.
inline double enumerate_all_corrupt(int n, int k, int c)
{
    std::int64_t hits = 0, total = 0;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    std::function<void(int, bool)> walk = [&](int depth, bool corrupt) {
        if (depth == c) {
            ++total;
            hits += corrupt;
            return;
        }
        for (int v = 0; v < n; ++v) {
            if (used[static_cast<std::size_t>(v)]) continue;
            used[static_cast<std::size_t>(v)] = true;
            walk(depth + 1, corrupt && v < k);
            used[static_cast<std::size_t>(v)] = false;
        }
    };
    walk(0, true);
    return static_cast<double>(hits) / static_cast<double>(total);
}

/// A protocol instance past genesis: n verifiers in one city, each at the
/// trust threshold through bootstrap weight plus a delegation ring, and the
/// first epoch started.
struct World {
    std::string city;
    ProtocolParams params;
    Protocol p;
    Rng rng;
    std::map<PersonId, biometric::GroundTruth> truth;
    std::vector<PersonId> verifiers; // ascending pk
    PersonId treasury = PersonId::from_label("test:treasury");

    explicit World(int n_verifiers = 5, ProtocolParams prm = {}, std::string city_id = "c", std::uint64_t seed = 42)
        : city(std::move(city_id)), params(std::move(prm)), p(default_policy()), rng(mix_seed(seed, 9))
    {
        p.initialize(params, seed);
        for (int i = 0; i < n_verifiers; ++i)
            verifiers.push_back(key("genesis" + std::to_string(i)));
        std::sort(verifiers.begin(), verifiers.end());
        std::vector<Credit> alloc;
        Amount used = 0;
        for (const auto& v : verifiers) {
            alloc.push_back({v, params.monetary.verifier_stake});
            used += params.monetary.verifier_stake;
        }
        alloc.push_back({treasury, params.monetary.genesis_supply() - used});
        p.allocate(alloc);
        for (const auto& v : verifiers) {
            person(v);
            p.genesis_identity(v, city, reading(v));
            p.lock_verifier_stake(v);
            p.register_verifier(v);
        }
        const auto t = params.trust_threshold_for(city);
        if (t > 1)
            for (const auto& v : verifiers)
                p.bootstrap_trust(v, t - 1);
        for (std::size_t i = 0; i < verifiers.size(); ++i)
            p.delegate(verifiers[i], verifiers[(i + 1) % verifiers.size()]);
        p.advance_epoch();
    }

    static PersonId key(const std::string& label) { return PersonId::from_label("test:" + label); }

    const biometric::GroundTruth& person(const PersonId& pk)
    {
        auto it = truth.find(pk);
        if (it == truth.end())
            it = truth.emplace(pk, biometric::generate_person_ground_truth(p.policy(), rng)).first;
        return it->second;
    }

    biometric::BiometricTemplate reading(const PersonId& pk)
    {
        return biometric::sample_template(person(pk), p.policy(), rng);
    }

    /// Stake-gated claim funded by the treasury.
    ClaimResult claim_with_stake(const PersonId& pk)
    {
        const Amount amount = required_stake(p.state(), city);
        p.transfer(treasury, pk, amount);
        return p.claim_identity(pk, reading(pk), city, GateKind::Stake);
    }

    ClaimResult claim_invited(const PersonId& pk, const PersonId& inviter)
    {
        return p.claim_identity(pk, reading(pk), city, GateKind::Invitation, inviter);
    }

    const IdentityRecord& record(const PersonId& pk) const { return *p.state().registry.find(pk); }

    /// Drives a pending identity with honest presentations, one certificate
    /// per epoch, reassigning after rejections. Returns true once Verified.
    bool drive_to_verified(const PersonId& pk, int max_epochs = 20)
    {
        for (int e = 0; e < max_epochs; ++e) {
            const auto& r = record(pk);
            if (r.status == IdentityStatus::Verified) return true;
            if (r.status != IdentityStatus::PendingVerification) return false;
            if (!r.current_assignee) {
                if (r.last_rejected_by) p.request_reassignment(pk);
                else p.assign_next_verifier(pk);
            }
            const auto v = *record(pk).current_assignee;
            if (p.submit_certificate(v, pk, reading(pk)).verified) return true;
            p.advance_epoch();
        }
        return record(pk).status == IdentityStatus::Verified;
    }

    PersonId new_verified(const std::string& label)
    {
        const auto pk = key(label);
        claim_with_stake(pk);
        drive_to_verified(pk);
        return pk;
    }
};

} // namespace uniqueid::testing
