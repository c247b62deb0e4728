#include "apply_internal.hpp"

#include <algorithm>
#include <map>

namespace uniqueid::governance {

std::string_view to_string(Vote v)
{
    switch (v) {
    case Vote::Approve: return "approve";
    case Vote::Reject: return "reject";
    case Vote::Abstain: return "abstain";
    }
    return "abstain";
}

std::optional<Vote> vote_from_string(std::string_view s)
{
    for (auto v : {Vote::Approve, Vote::Reject, Vote::Abstain})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

std::string_view to_string(ProposalStatus s)
{
    switch (s) {
    case ProposalStatus::Open: return "Open";
    case ProposalStatus::Passed: return "Passed";
    case ProposalStatus::Failed: return "Failed";
    }
    return "Open";
}

std::vector<std::size_t> partition_sizes(std::size_t n, SizeBounds bounds)
{
    const auto min = static_cast<std::size_t>(bounds.min);
    const auto max = static_cast<std::size_t>(bounds.max);
    if (n < min || n == 0) throw ProtocolError(ErrorCode::TooFewVerified, std::to_string(n) + " < " + std::to_string(min));
    std::size_t groups = (n + max - 1) / max;
    if (n / groups < min) groups = n / min;
    std::vector<std::size_t> sizes(groups, n / groups);
    for (std::size_t i = 0; i < n % groups; ++i)
        ++sizes[i];
    return sizes;
}

std::vector<std::vector<PersonId>> partition(const std::vector<PersonId>& ordered, SizeBounds bounds)
{
    std::vector<std::vector<PersonId>> out;
    auto it = ordered.begin();
    for (auto size : partition_sizes(ordered.size(), bounds)) {
        out.emplace_back(it, it + static_cast<std::ptrdiff_t>(size));
        it += static_cast<std::ptrdiff_t>(size);
    }
    return out;
}

std::vector<std::vector<PersonId>> form_communities(std::vector<CityMember> verified, SizeBounds bounds)
{
    std::map<std::string, std::vector<PersonId>> by_city;
    for (auto& m : verified)
        by_city[m.city].push_back(m.pk);

    std::vector<std::vector<PersonId>> out;
    std::vector<PersonId> pool;
    for (auto& [city, members] : by_city) {
        std::sort(members.begin(), members.end());
        if (static_cast<std::int64_t>(members.size()) < bounds.min) {
            pool.insert(pool.end(), members.begin(), members.end());
            continue;
        }
        for (auto& g : partition(members, bounds))
            out.push_back(std::move(g));
    }
    if (static_cast<std::int64_t>(pool.size()) >= bounds.min) {
        for (auto& g : partition(pool, bounds))
            out.push_back(std::move(g));
    } else if (!pool.empty()) {
        if (out.empty())
            throw ProtocolError(ErrorCode::TooFewVerified,
                                std::to_string(pool.size()) + " < " + std::to_string(bounds.min));
        out.back().insert(out.back().end(), pool.begin(), pool.end());
    }
    return out;
}

std::vector<std::vector<PersonId>> form_layer(std::vector<PersonId> lower, SizeBounds bounds)
{
    std::sort(lower.begin(), lower.end());
    if (lower.empty()) return {};
    if (static_cast<std::int64_t>(lower.size()) < bounds.min) return {lower};
    return partition(lower, bounds);
}

Election elect_representative(const std::vector<PersonId>& members, const DelegateLookup& delegate_of)
{
    std::vector<PersonId> sorted = members; // pooled groups are in city, then pk order
    std::sort(sorted.begin(), sorted.end());
    std::map<PersonId, std::int64_t> counts;
    for (const auto& m : members)
        if (auto to = delegate_of(m); to && *to != m && std::binary_search(sorted.begin(), sorted.end(), *to))
            ++counts[*to];
    if (counts.empty()) throw ProtocolError(ErrorCode::NoVotesCast, "no delegations inside the group");
    Election best;
    for (const auto& [pk, n] : counts) // ascending pk: strict > keeps the lowest on ties
        if (n > best.support) best = {pk, n};
    return best;
}

bool representative_valid(std::int64_t election_support, std::int64_t current_support, std::int64_t retention_ppm)
{
    const std::int64_t needed = (retention_ppm * election_support + ppm_one - 1) / ppm_one;
    return current_support >= needed;
}

std::int64_t scoped_support(const std::vector<PersonId>& members, const PersonId& candidate,
                            const DelegateLookup& delegate_of)
{
    std::int64_t n = 0;
    for (const auto& m : members)
        if (m != candidate && delegate_of(m) == candidate) ++n;
    return n;
}

ProposalStatus tally(const std::array<LayerBallots, 3>& layers, const ThresholdTriple& thresholds)
{
    const std::array<std::int64_t, 3> t{thresholds.layer1, thresholds.layer2, thresholds.layer3};
    for (const auto& l : layers)
        if (l.total() <= 0) throw ProtocolError(ErrorCode::LayersEmpty, "a layer cast no ballots");
    for (std::size_t i = 0; i < 3; ++i)
        if (layers[i].approvals * ppm_one < t[i] * layers[i].total()) return ProposalStatus::Failed;
    return ProposalStatus::Passed;
}

ProtocolParams apply_parameter_change(const Proposal& proposal, const ProtocolParams& params)
{
    if (proposal.status != ProposalStatus::Passed)
        throw ProtocolError(ErrorCode::NotPassed, "proposal " + std::to_string(proposal.id));
    ProtocolParams next = params;
    set_runtime_param(next, proposal.parameter, proposal.value);
    return next;
}

Digest membership_digest(const std::vector<std::vector<PersonId>>& groups)
{
    std::string bytes;
    append_be64(bytes, groups.size());
    for (const auto& g : groups) {
        append_be64(bytes, g.size());
        for (const auto& pk : g)
            bytes.append(pk.bytes.begin(), pk.bytes.end());
    }
    return sha256(bytes);
}

std::vector<PersonId> GovernanceState::representatives(int layer) const
{
    std::vector<PersonId> out;
    for (const auto& g : layers.at(static_cast<std::size_t>(layer)))
        if (g.representative) out.push_back(*g.representative);
    return out;
}

bool GovernanceState::is_representative(int layer, const PersonId& pk) const
{
    return group_of_representative(layer, pk) != nullptr;
}

const Group* GovernanceState::group_of_representative(int layer, const PersonId& pk) const
{
    for (const auto& g : layers.at(static_cast<std::size_t>(layer)))
        if (g.representative == pk) return &g;
    return nullptr;
}

} // namespace uniqueid::governance

namespace uniqueid::detail {

using namespace governance;

DelegateLookup trust_lookup(const ApplicationState& s)
{
    return [&s](const PersonId& pk) -> std::optional<PersonId> {
        auto it = s.trust.delegation_of.find(pk);
        if (it == s.trust.delegation_of.end()) return std::nullopt;
        return it->second;
    };
}

namespace {

std::vector<std::int64_t> sizes_of(const std::vector<std::vector<PersonId>>& groups)
{
    std::vector<std::int64_t> out;
    for (const auto& g : groups)
        out.push_back(static_cast<std::int64_t>(g.size()));
    return out;
}

void check_membership(const Event& ev, const std::vector<std::vector<PersonId>>& groups)
{
    if (field_array(ev.payload, "sizes") != Json(sizes_of(groups))
        || field_digest(ev.payload, "digest") != membership_digest(groups))
        reject(ErrorCode::InvalidEvent, "group membership differs from the deterministic partition");
}

std::vector<Group> as_groups(std::vector<std::vector<PersonId>> groups)
{
    std::vector<Group> out;
    for (auto& g : groups)
        out.push_back({std::move(g), std::nullopt, 0});
    return out;
}

int layer_index(const Event& ev)
{
    const auto layer = field_int(ev.payload, "layer");
    if (layer < 1 || layer > 3) reject(ErrorCode::InvalidEvent, "layer must be 1, 2 or 3");
    return static_cast<int>(layer - 1);
}

Group& group_at(ApplicationState& s, int layer, const Event& ev)
{
    auto& groups = s.governance.layers[static_cast<std::size_t>(layer)];
    const auto index = field_int(ev.payload, "group");
    if (index < 0 || index >= static_cast<std::int64_t>(groups.size())) reject(ErrorCode::InvalidEvent, "no such group");
    return groups[static_cast<std::size_t>(index)];
}

void apply_communities(ApplicationState& s, const Event& ev)
{
    if (static_cast<std::uint64_t>(field_int(ev.payload, "round")) != s.governance.round + 1)
        reject(ErrorCode::InvalidEvent, "community rounds are sequential");
    std::vector<CityMember> verified;
    for (const auto& [pk, r] : s.registry.identities)
        if (r.status == IdentityStatus::Verified) verified.push_back({r.city, pk});
    const auto groups = form_communities(std::move(verified), s.params.community);
    check_membership(ev, groups);
    s.governance.layers[0] = as_groups(groups);
    s.governance.layers[1].clear();
    s.governance.layers[2].clear();
    ++s.governance.round;
}

void apply_layer(ApplicationState& s, const Event& ev)
{
    const int layer = layer_index(ev);
    if (layer == 0) reject(ErrorCode::InvalidEvent, "layer 1 is formed from communities");
    const auto& bounds = layer == 1 ? s.params.layer2_group : s.params.layer3_group;
    const auto groups = form_layer(s.governance.representatives(layer - 1), bounds);
    if (groups.empty()) reject(ErrorCode::InvalidEvent, "no lower-layer representatives");
    check_membership(ev, groups);
    s.governance.layers[static_cast<std::size_t>(layer)] = as_groups(groups);
    if (layer == 1) s.governance.layers[2].clear();
}

} // namespace

namespace {

void apply_elected(ApplicationState& s, const Event& ev)
{
    const int layer = layer_index(ev);
    auto& group = group_at(s, layer, ev);
    if (group.representative) reject(ErrorCode::InvalidEvent, "group already represented");
    const Election e = expected_election(s, layer, group);
    if (field_pk(ev.payload, "pk") != e.representative || field_int(ev.payload, "support") != e.support)
        reject(ErrorCode::InvalidEvent, "election result differs from the plurality rule");
    group.representative = e.representative;
    group.election_support = e.support;
}

void apply_invalidated(ApplicationState& s, const Event& ev)
{
    const int layer = layer_index(ev);
    auto& group = group_at(s, layer, ev);
    if (!group.representative || *group.representative != field_pk(ev.payload, "pk"))
        reject(ErrorCode::InvalidEvent, "not the group's representative");
    const auto support = current_support(s, group);
    if (field_int(ev.payload, "support") != support
        || representative_valid(group.election_support, support, s.params.rep_retention_ppm))
        reject(ErrorCode::InvalidEvent, "representative still holds enough support");
    group.representative.reset();
    group.election_support = 0;
}

void apply_opened(ApplicationState& s, const Event& ev)
{
    const auto id = field_int(ev.payload, "id");
    if (id != static_cast<std::int64_t>(s.governance.proposals.size()) + 1)
        reject(ErrorCode::InvalidEvent, "proposal ids are sequential");
    const std::string& cls = field_str(ev.payload, "class");
    auto t = s.params.importance_classes.find(cls);
    if (t == s.params.importance_classes.end()) reject(ErrorCode::InvalidEvent, "unknown importance class " + cls);
    const PersonId opener = field_pk(ev.payload, "opener");
    if (!s.governance.is_representative(2, opener)) reject(ErrorCode::NotAuthorized, "only layer-3 representatives");
    Proposal p;
    p.id = id;
    p.importance_class = cls;
    p.thresholds = t->second;
    p.parameter = field_str(ev.payload, "parameter");
    p.value = field_int(ev.payload, "value");
    p.opener = opener;
    p.opened_epoch = ev.epoch;
    s.governance.proposals[id] = std::move(p);
}

void apply_tallied(ApplicationState& s, const Event& ev)
{
    auto it = s.governance.proposals.find(field_int(ev.payload, "id"));
    if (it == s.governance.proposals.end() || it->second.status != ProposalStatus::Open)
        reject(ErrorCode::InvalidEvent, "no open proposal");
    auto& p = it->second;
    const auto& layers = field_array(ev.payload, "layers");
    if (layers.size() != 3) reject(ErrorCode::InvalidEvent, "three layers of ballots");
    std::array<LayerBallots, 3> ballots;
    bool empty = false;
    for (std::size_t i = 0; i < 3; ++i) {
        ballots[i] = {field_int(layers[i], "approvals"), field_int(layers[i], "rejections"),
                      field_int(layers[i], "abstentions")};
        if (ballots[i].approvals < 0 || ballots[i].rejections < 0 || ballots[i].abstentions < 0
            || ballots[i].total() != static_cast<std::int64_t>(s.governance.representatives(static_cast<int>(i)).size()))
            reject(ErrorCode::InvalidEvent, "every representative of a layer is counted once");
        empty = empty || ballots[i].total() == 0;
    }
    const ProposalStatus status = empty ? ProposalStatus::Failed : tally(ballots, p.thresholds);
    if (field_str(ev.payload, "status") != to_string(status) || field_bool(ev.payload, "layers_empty") != empty)
        reject(ErrorCode::InvalidEvent, "tally result differs");
    p.status = status;
    if (status == ProposalStatus::Passed) {
        ++s.governance.passed;
        bool applicable = is_runtime_mutable(p.parameter);
        if (applicable) {
            try {
                apply_parameter_change(p, s.params);
            } catch (const ProtocolError&) {
                applicable = false;
            }
        }
        if (applicable) s.governance.scheduled.push_back({p.id, p.parameter, p.value, ev.epoch + 1});
    } else {
        ++s.governance.failed;
    }
}

void apply_parameter_changed(ApplicationState& s, const Event& ev)
{
    const auto id = field_int(ev.payload, "proposal");
    auto& sched = s.governance.scheduled;
    auto it = std::find_if(sched.begin(), sched.end(), [&](const ScheduledChange& c) { return c.proposal == id; });
    if (it == sched.end() || it->effective_epoch > ev.epoch) reject(ErrorCode::NotPassed, "no change due");
    if (field_str(ev.payload, "parameter") != it->parameter || field_int(ev.payload, "value") != it->value)
        reject(ErrorCode::InvalidEvent, "change differs from the passed proposal");
    s.params = apply_parameter_change(s.governance.proposals.at(id), s.params);
    sched.erase(it);
}

} // namespace

bool apply_governance_event(ApplicationState& s, const Event& ev)
{
    switch (ev.kind) {
    case EventKind::CommunitiesFormed: apply_communities(s, ev); return true;
    case EventKind::LayerFormed: apply_layer(s, ev); return true;
    case EventKind::RepresentativeElected: apply_elected(s, ev); return true;
    case EventKind::RepresentativeInvalidated: apply_invalidated(s, ev); return true;
    case EventKind::ProposalOpened: apply_opened(s, ev); return true;
    case EventKind::ProposalTallied: apply_tallied(s, ev); return true;
    case EventKind::ParameterChanged: apply_parameter_changed(s, ev); return true;
    default: return false;
    }
}

Json governance_to_json(const GovernanceState& g)
{
    Json layers = Json::array();
    for (const auto& layer : g.layers) {
        Json groups = Json::array();
        for (const auto& grp : layer) {
            Json members = Json::array();
            for (const auto& m : grp.members)
                members.push_back(m.hex());
            groups.push_back({{"members", members},
                              {"representative", grp.representative ? Json(grp.representative->hex()) : Json(nullptr)},
                              {"election_support", grp.election_support}});
        }
        layers.push_back(groups);
    }
    Json proposals = Json::array();
    for (const auto& [id, p] : g.proposals)
        proposals.push_back({{"id", id},
                             {"class", p.importance_class},
                             {"thresholds", {p.thresholds.layer1, p.thresholds.layer2, p.thresholds.layer3}},
                             {"parameter", p.parameter},
                             {"value", p.value},
                             {"opener", p.opener.hex()},
                             {"opened_epoch", p.opened_epoch},
                             {"status", std::string(to_string(p.status))}});
    Json scheduled = Json::array();
    for (const auto& c : g.scheduled)
        scheduled.push_back({{"proposal", c.proposal},
                             {"parameter", c.parameter},
                             {"value", c.value},
                             {"effective_epoch", c.effective_epoch}});
    return {{"round", g.round},
            {"layers", layers},
            {"proposals", proposals},
            {"scheduled", scheduled},
            {"passed", g.passed},
            {"failed", g.failed}};
}

} // namespace uniqueid::detail

namespace uniqueid {

using namespace governance;

Election expected_election(const ApplicationState& s, int layer, const Group& group)
{
    try {
        return elect_representative(group.members, detail::trust_lookup(s));
    } catch (const ProtocolError& e) {
        if (layer == 0 || e.code() != ErrorCode::NoVotesCast) throw;
    }
    // Higher layers without in-group delegations fall back to the member
    // with the strongest mandate one layer down.
    Election best{group.members.front(), -1};
    for (const auto& m : group.members) {
        const auto* g = s.governance.group_of_representative(layer - 1, m);
        const std::int64_t support = g ? g->election_support : 0;
        if (support > best.support) best = {m, support};
    }
    return {best.representative, 0};
}

std::int64_t current_support(const ApplicationState& s, const Group& group)
{
    return group.representative ? scoped_support(group.members, *group.representative, detail::trust_lookup(s)) : 0;
}

} // namespace uniqueid
