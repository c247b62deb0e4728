#include "apply_internal.hpp"

#include <algorithm>

namespace uniqueid {

namespace {

void apply_genesis_params(ApplicationState& s, const Event& ev)
{
    if (s.initialized) detail::reject(ErrorCode::InvalidEvent, "genesis parameters are set once");
    auto it = ev.payload.find("params");
    if (it == ev.payload.end() || !it->is_object()) detail::reject(ErrorCode::InvalidEvent, "missing params");
    ProtocolParams params;
    try {
        params = protocol_params_from_json(*it);
    } catch (const nlohmann::json::exception& e) {
        detail::reject(ErrorCode::InvalidEvent, std::string("params: ") + e.what());
    }
    validate(params);
    const auto seed = static_cast<std::uint64_t>(field_int(ev.payload, "seed"));
    const RandomnessBeacon beacon = beacon_genesis(seed);
    if (field_digest(ev.payload, "beacon") != beacon.value) detail::reject(ErrorCode::InvalidEvent, "beacon seed");
    s.params = std::move(params);
    s.beacon = beacon;
    s.epoch = ev.epoch;
    s.initialized = true;
}

void apply_beacon(ApplicationState& s, const Event& ev)
{
    const RandomnessBeacon next = beacon_next(s.beacon);
    if (static_cast<std::uint64_t>(field_int(ev.payload, "round")) != next.round
        || field_digest(ev.payload, "value") != next.value)
        detail::reject(ErrorCode::InvalidEvent, "beacon does not follow the hash chain");
    for (const auto& c : s.governance.scheduled)
        if (c.effective_epoch < ev.epoch)
            detail::reject(ErrorCode::InvalidEvent, "parameter change of proposal " + std::to_string(c.proposal)
                                                        + " was due at the previous boundary");
    s.beacon = next;
    s.epoch = ev.epoch;
    s.genesis_open = false;
}

} // namespace

void ApplicationState::apply(const Event& ev)
{
    if (ev.kind == EventKind::GenesisParams) {
        apply_genesis_params(*this, ev);
        return;
    }
    if (!initialized) detail::reject(ErrorCode::InvalidEvent, "the log must start with genesis parameters");
    if (ev.kind == EventKind::BeaconAdvanced) {
        if (ev.epoch != epoch + 1) detail::reject(ErrorCode::InvalidEvent, "the beacon advances one epoch at a time");
        apply_beacon(*this, ev);
        return;
    }
    if (ev.epoch != epoch) detail::reject(ErrorCode::InvalidEvent, "event epoch differs from the current epoch");
    if (detail::apply_registry_event(*this, ev) || detail::apply_trust_event(*this, ev)
        || detail::apply_token_event(*this, ev) || detail::apply_governance_event(*this, ev)
        || detail::apply_audit_event(*this, ev))
        return;
    detail::reject(ErrorCode::InvalidEvent, "unhandled event kind");
}

Json ApplicationState::to_json() const
{
    Json verifiers = Json::array();
    for (const auto& [pk, v] : registry.verifiers)
        verifiers.push_back({{"pk", pk.hex()},
                             {"city", v.city},
                             {"sponsor_window", v.sponsor.window},
                             {"sponsor_used", v.sponsor.used}});
    Json retired = Json::array();
    for (const auto& pk : registry.retired)
        retired.push_back(pk.hex());
    return {
        {"initialized", initialized},
        {"genesis_open", genesis_open},
        {"params", uniqueid::to_json(params)},
        {"beacon", {{"round", beacon.round}, {"value", to_hex(beacon.value)}}},
        {"epoch", epoch},
        {"registry",
         {{"identities", registry_dump(*this)},
          {"verifiers", verifiers},
          {"pending_stake_claims", registry.pending_stake_claims},
          {"retired", retired},
          {"claims_total", registry.claims_total}}},
        {"trust", detail::trust_to_json(trust)},
        {"tokens", detail::tokens_to_json(tokens)},
        {"governance", detail::governance_to_json(governance)},
        {"audit", detail::audit_to_json(audit)},
    };
}

Digest ApplicationState::state_hash() const
{
    return sha256(to_json().dump());
}

ApplicationState replay(std::span<const Event> events, const ReplayObserver& observer)
{
    ApplicationState s;
    for (const auto& ev : events) {
        try {
            s.apply(ev);
        } catch (const ProtocolError& e) {
            throw RejectedEvent(ev.height, e);
        }
        if (observer) observer(ev, s);
    }
    return s;
}

} // namespace uniqueid
