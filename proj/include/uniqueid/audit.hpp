#pragma once

#include "uniqueid/common.hpp"
#include "uniqueid/registry.hpp"
#include "uniqueid/tokens.hpp"

#include <map>
#include <optional>
#include <set>
#include <vector>

namespace uniqueid {

enum class AuditOutcome { PassedGenuine, FailedFake, MissedDeadline };

std::string_view to_string(AuditOutcome o);
std::optional<AuditOutcome> audit_outcome_from_string(std::string_view s);

struct AuditCall {
    std::int64_t id = 0;
    PersonId caller;
    PersonId target;
    bool system = false; // random check; no quota consumed
    Epoch called_epoch = 0;
    Epoch deadline_epoch = 0;
    std::optional<AuditOutcome> outcome;
};

struct AJudgeVerdict {
    std::int64_t call_id = 0;
    PersonId target;
    std::map<PersonId, bool> per_verifier; // true = genuine
    bool genuine = false;
    AuditOutcome outcome = AuditOutcome::MissedDeadline;
};

struct Settlement {
    PersonId target;
    PersonId beneficiary;
    std::vector<Credit> slashed; // per bad verifier, amount moved to the caller
    std::vector<PersonId> suspended;

    Amount total() const
    {
        Amount t = 0;
        for (const auto& c : slashed)
            t += c.amount;
        return t;
    }
};

/// Strict majority of participants, or unanimity when configured.
bool ajudge_final(std::int64_t genuine_votes, std::int64_t participants, bool unanimous);

struct AuditStats {
    std::int64_t calls_opened = 0;
    std::int64_t passed = 0;
    std::int64_t failed = 0;
    std::int64_t missed = 0;
    Amount tokens_slashed = 0;
};

struct AuditState {
    std::map<std::int64_t, AuditCall> calls;
    std::map<PersonId, std::int64_t> open_by_target;
    std::map<PersonId, QuotaWindow> recheck;
    std::set<PersonId> reward_due;                    // PassedGenuine, reward not yet minted
    std::map<PersonId, AuditOutcome> revocation_due; // failed or missed, not yet revoked
    std::map<PersonId, std::int64_t> slash_due;       // bad verifier -> call id
    std::map<PersonId, std::int64_t> suspension_due;  // bad verifier -> call id
    std::int64_t next_id = 1;
    AuditStats stats;
};

inline const PersonId system_account = PersonId::from_label("uniqueid:system");

} // namespace uniqueid
