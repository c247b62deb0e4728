#pragma once

#include "uniqueid/common.hpp"
#include "uniqueid/params.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace uniqueid {

inline const std::string lock_entry = "entry";
inline const std::string lock_verifier = "verifier";

struct TokenAccount {
    Amount balance = 0;
    Amount locked = 0;
};

struct Credit {
    PersonId pk;
    Amount amount = 0;

    bool operator==(const Credit&) const = default;
};

struct SupplyStats {
    Amount genesis_supply = 0;
    Amount minted = 0;              // all minting: verification and A-judge rewards
    Amount minted_verification = 0; // the per-user issuance only
    std::int64_t verifications_minted = 0;
    Amount forfeited = 0;
    Amount slashed = 0;
    Amount locked = 0;

    Amount circulating() const { return genesis_supply + minted - forfeited - locked; }
};

struct TokenState {
    std::map<PersonId, TokenAccount> accounts;
    std::map<std::pair<PersonId, std::string>, Amount> locks;
    SupplyStats supply;
    bool allocated = false;

    Amount balance(const PersonId& pk) const
    {
        auto it = accounts.find(pk);
        return it == accounts.end() ? 0 : it->second.balance;
    }
    Amount lock_amount(const PersonId& pk, const std::string& reason) const
    {
        auto it = locks.find({pk, reason});
        return it == locks.end() ? 0 : it->second;
    }

    /// Sum over accounts of balance + locked.
    Amount total_holdings() const;
};

/// Split of x among the user and her certifying verifiers. With weights
/// (w_user, w_verifier) each verifier receives floor(x * w_v / (w_u + v * w_v))
/// and the user receives the remainder. Equal weights give floor(x / (v + 1)).
std::vector<Credit> verification_credits(const PersonId& user, const std::vector<PersonId>& verifiers,
                                         const MonetaryParams& m);

/// Gini coefficient of the given non-negative amounts (0 for empty input).
double gini(std::vector<Amount> amounts);

} // namespace uniqueid
