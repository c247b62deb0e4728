#pragma once

#include "uniqueid/common.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace uniqueid {

enum class IdentityStatus { PendingEntry, PendingVerification, Verified, Revoked, Expired };

std::string_view to_string(IdentityStatus s);

enum class GateKind { Genesis, Invitation, Stake, VerifierSponsor, Recovery };

std::string_view to_string(GateKind g);
std::optional<GateKind> gate_kind_from_string(std::string_view s);

struct EntryGate {
    GateKind kind = GateKind::Genesis;
    std::optional<PersonId> ref; // inviter or sponsor
    Amount amount = 0;           // stake amount
};

struct Certificate {
    PersonId verifier;
    Epoch epoch = 0;
};

struct IdentityRecord {
    PersonId pk;
    Digest template_digest{};
    std::string city;
    IdentityStatus status = IdentityStatus::PendingEntry;
    EntryGate entry_gate;
    std::vector<Certificate> certificates;
    std::uint64_t assignment_seq = 0;
    std::optional<PersonId> current_assignee;
    std::optional<PersonId> last_rejected_by; // set while a rejection awaits reassignment
    std::int64_t reassignments_used = 0;
    bool assignment_voided = false; // a suspension voided the last assignment
    std::int64_t certs_required = 0; // requirement in force when verification started
    bool dedup_pending = false;
    bool minted = false;
    std::int64_t invitations_remaining = 0;
    std::vector<PersonId> trust_circle;
    Epoch claimed_epoch = 0;
    std::optional<Epoch> verified_epoch;
    std::optional<Epoch> expiry_epoch;
    std::string revocation_reason;

    bool has_certificate_from(const PersonId& v) const
    {
        for (const auto& c : certificates)
            if (c.verifier == v) return true;
        return false;
    }
};

struct QuotaWindow {
    std::int64_t window = -1;
    std::int64_t used = 0;

    std::int64_t used_in(std::int64_t w) const { return w == window ? used : 0; }
    void consume(std::int64_t w)
    {
        if (w != window) {
            window = w;
            used = 0;
        }
        ++used;
    }
};

struct VerifierRecord {
    PersonId pk;
    std::string city;
    QuotaWindow sponsor;
};

/// value(round + 1) = SHA-256(value(round) || (round + 1) as 8-byte big-endian).
struct RandomnessBeacon {
    std::uint64_t round = 0;
    Digest value{};

    bool operator==(const RandomnessBeacon&) const = default;
};

/// Genesis beacon: SHA-256 of the scenario seed as 8 big-endian bytes.
RandomnessBeacon beacon_genesis(std::uint64_t seed);
RandomnessBeacon beacon_next(const RandomnessBeacon& beacon);

/// (first 8 bytes of SHA-256(R || pk || seq as 8-byte big-endian)) mod n.
std::uint64_t assignment_index(const Digest& beacon_value, const PersonId& pk, std::uint64_t seq, std::uint64_t n);

/// Recovery quorum: strict majority of the trust circle.
inline std::size_t recovery_quorum(std::size_t circle_size) { return circle_size / 2 + 1; }

struct RegistryState {
    std::map<PersonId, IdentityRecord> identities;
    std::map<PersonId, VerifierRecord> verifiers;
    std::map<std::string, std::set<PersonId>> city_verifiers;
    std::map<std::string, std::int64_t> pending_stake_claims;
    std::set<PersonId> retired; // keys replaced by recovery
    std::uint64_t claims_total = 0;

    const IdentityRecord* find(const PersonId& pk) const
    {
        auto it = identities.find(pk);
        return it == identities.end() ? nullptr : &it->second;
    }
    bool pk_in_use(const PersonId& pk) const { return identities.count(pk) > 0 || retired.count(pk) > 0; }
    bool is_verified(const PersonId& pk) const
    {
        const auto* r = find(pk);
        return r && r->status == IdentityStatus::Verified;
    }
};

nlohmann::json to_json(const IdentityRecord& r);

} // namespace uniqueid
