#pragma once

#include "uniqueid/common.hpp"

#include <algorithm>
#include <map>

namespace uniqueid {

/// Active delegations of the one non-tradable trust token each verified
/// person holds, plus genesis bootstrap weight and suspensions.
struct TrustState {
    std::map<PersonId, PersonId> delegation_of; // from -> to
    std::map<PersonId, std::int64_t> received;  // to -> count of active delegations
    std::map<PersonId, std::int64_t> bootstrap; // genesis-granted weight
    std::map<PersonId, Epoch> suspended_until;

    std::int64_t weight(const PersonId& pk) const
    {
        std::int64_t w = 0;
        if (auto it = received.find(pk); it != received.end()) w += it->second;
        if (auto it = bootstrap.find(pk); it != bootstrap.end()) w += it->second;
        return w;
    }

    bool suspended(const PersonId& pk, Epoch epoch) const
    {
        auto it = suspended_until.find(pk);
        return it != suspended_until.end() && epoch < it->second;
    }

    void withdraw(const PersonId& from)
    {
        auto it = delegation_of.find(from);
        if (it == delegation_of.end()) return;
        if (--received[it->second] == 0) received.erase(it->second);
        delegation_of.erase(it);
    }

    void delegate(const PersonId& from, const PersonId& to)
    {
        withdraw(from);
        delegation_of[from] = to;
        ++received[to];
    }

    /// Longer suspension wins.
    void suspend(const PersonId& pk, Epoch until)
    {
        auto& u = suspended_until[pk];
        u = std::max(u, until);
    }
};

} // namespace uniqueid
