#pragma once

#include "uniqueid/common.hpp"
#include "uniqueid/params.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace uniqueid::governance {

enum class Vote { Approve, Reject, Abstain };
enum class ProposalStatus { Open, Passed, Failed };

std::string_view to_string(Vote v);
std::optional<Vote> vote_from_string(std::string_view s);
std::string_view to_string(ProposalStatus s);

/// Group sizes for n members: ceil(n / max) groups split as evenly as
/// possible; when that would leave groups below min, floor(n / min) groups
/// instead (sizes may then exceed max). Throws TooFewVerified if n < min.
std::vector<std::size_t> partition_sizes(std::size_t n, SizeBounds bounds);

/// Splits an ordered member list according to partition_sizes.
std::vector<std::vector<PersonId>> partition(const std::vector<PersonId>& ordered, SizeBounds bounds);

struct CityMember {
    std::string city;
    PersonId pk;
};

/// Communities by city, then pk order. Members of cities too small to form a
/// community are pooled (in city, pk order) and partitioned together; a pool
/// still below the minimum joins the last community formed.
std::vector<std::vector<PersonId>> form_communities(std::vector<CityMember> verified, SizeBounds bounds);

/// Higher-layer groups over the lower layer's representatives in pk order.
/// Fewer than bounds.min representatives form a single group.
std::vector<std::vector<PersonId>> form_layer(std::vector<PersonId> lower_representatives, SizeBounds bounds);

struct Election {
    PersonId representative;
    std::int64_t support = 0;
};

using DelegateLookup = std::function<std::optional<PersonId>(const PersonId&)>;

/// Plurality over delegations that point inside the group; ties go to the
/// lowest pk. Throws NoVotesCast when no member delegates within the group.
Election elect_representative(const std::vector<PersonId>& members, const DelegateLookup& delegate_of);

/// Invalid iff current support < ceil(retention * election support).
bool representative_valid(std::int64_t election_support, std::int64_t current_support, std::int64_t retention_ppm);

/// Delegations from group members to the given candidate.
std::int64_t scoped_support(const std::vector<PersonId>& members, const PersonId& candidate,
                            const DelegateLookup& delegate_of);

struct LayerBallots {
    std::int64_t approvals = 0;
    std::int64_t rejections = 0;
    std::int64_t abstentions = 0;

    std::int64_t total() const { return approvals + rejections + abstentions; }
};

/// Passed iff approvals / (approvals + rejections + abstentions) >= t_L in
/// every layer. Throws LayersEmpty if any layer has no ballots.
ProposalStatus tally(const std::array<LayerBallots, 3>& layers, const ThresholdTriple& thresholds);

struct Proposal {
    std::int64_t id = 0;
    std::string importance_class;
    ThresholdTriple thresholds;
    std::string parameter;
    std::int64_t value = 0;
    PersonId opener;
    Epoch opened_epoch = 0;
    ProposalStatus status = ProposalStatus::Open;
    std::array<std::map<PersonId, Vote>, 3> votes;
};

/// Returns params with the proposal's change applied. Throws NotPassed or
/// NotWhitelisted.
ProtocolParams apply_parameter_change(const Proposal& proposal, const ProtocolParams& params);

Digest membership_digest(const std::vector<std::vector<PersonId>>& groups);

struct Group {
    std::vector<PersonId> members;
    std::optional<PersonId> representative;
    std::int64_t election_support = 0;
};

struct ScheduledChange {
    std::int64_t proposal = 0;
    std::string parameter;
    std::int64_t value = 0;
    Epoch effective_epoch = 0;
};

struct GovernanceState {
    std::uint64_t round = 0;
    std::array<std::vector<Group>, 3> layers; // index 0 = communities
    std::map<std::int64_t, Proposal> proposals;
    std::vector<ScheduledChange> scheduled;
    std::int64_t passed = 0;
    std::int64_t failed = 0;

    // layer is the array index: 0 = community representatives (layer 1).
    std::vector<PersonId> representatives(int layer) const;
    bool is_representative(int layer, const PersonId& pk) const;
    const Group* group_of_representative(int layer, const PersonId& pk) const;
};

} // namespace uniqueid::governance
