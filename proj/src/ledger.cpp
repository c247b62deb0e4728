#include "uniqueid/ledger.hpp"

#include <array>
#include <algorithm>
#include <istream>
#include <iterator>
#include <ostream>
#include <utility>

namespace uniqueid {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 37> kind_names{{
    {EventKind::GenesisParams, "GenesisParams"},
    {EventKind::BeaconAdvanced, "BeaconAdvanced"},
    {EventKind::TokensAllocated, "TokensAllocated"},
    {EventKind::TokensTransferred, "TokensTransferred"},
    {EventKind::IdentityGenesis, "IdentityGenesis"},
    {EventKind::VerifierRegistered, "VerifierRegistered"},
    {EventKind::TrustBootstrapped, "TrustBootstrapped"},
    {EventKind::IdentityClaimed, "IdentityClaimed"},
    {EventKind::StakeLocked, "StakeLocked"},
    {EventKind::StakeReturned, "StakeReturned"},
    {EventKind::StakeForfeited, "StakeForfeited"},
    {EventKind::StakeSlashed, "StakeSlashed"},
    {EventKind::DedupChecked, "DedupChecked"},
    {EventKind::DedupAdjudicated, "DedupAdjudicated"},
    {EventKind::VerifierAssigned, "VerifierAssigned"},
    {EventKind::AssignmentVoided, "AssignmentVoided"},
    {EventKind::CertificateIssued, "CertificateIssued"},
    {EventKind::CertificateRejected, "CertificateRejected"},
    {EventKind::IdentityVerified, "IdentityVerified"},
    {EventKind::TokensMinted, "TokensMinted"},
    {EventKind::IdentityRevoked, "IdentityRevoked"},
    {EventKind::TrustCircleDeclared, "TrustCircleDeclared"},
    {EventKind::IdentityRecovered, "IdentityRecovered"},
    {EventKind::RenewalCertified, "RenewalCertified"},
    {EventKind::RenewalRejected, "RenewalRejected"},
    {EventKind::IdentityExpired, "IdentityExpired"},
    {EventKind::TrustDelegated, "TrustDelegated"},
    {EventKind::TrustSuspended, "TrustSuspended"},
    {EventKind::CommunitiesFormed, "CommunitiesFormed"},
    {EventKind::LayerFormed, "LayerFormed"},
    {EventKind::RepresentativeElected, "RepresentativeElected"},
    {EventKind::RepresentativeInvalidated, "RepresentativeInvalidated"},
    {EventKind::ProposalOpened, "ProposalOpened"},
    {EventKind::ProposalTallied, "ProposalTallied"},
    {EventKind::ParameterChanged, "ParameterChanged"},
    {EventKind::AJudgeCalled, "AJudgeCalled"},
    {EventKind::AJudgeAdjudicated, "AJudgeAdjudicated"},
}};

Json body_object(std::uint64_t height, const Digest& prev_hash, Epoch epoch, EventKind kind, const Json& payload)
{
    Json body = Json::object();
    body["epoch"] = epoch;
    body["height"] = height;
    body["kind"] = std::string(to_string(kind));
    body["payload"] = payload;
    body["prev_hash"] = to_hex(prev_hash);
    return body;
}

[[noreturn]] void bad_field(const char* key)
{
    throw ProtocolError(ErrorCode::InvalidEvent, std::string("payload field '") + key + "' missing or mistyped");
}

const Json& field(const Json& payload, const char* key)
{
    if (!payload.is_object()) bad_field(key);
    auto it = payload.find(key);
    if (it == payload.end()) bad_field(key);
    return *it;
}

} // namespace

std::string_view to_string(EventKind kind)
{
    for (const auto& [k, name] : kind_names)
        if (k == kind) return name;
    return "Unknown";
}

std::optional<EventKind> event_kind_from_string(std::string_view name)
{
    for (const auto& [k, n] : kind_names)
        if (n == name) return k;
    return std::nullopt;
}

std::string canonical_body(std::uint64_t height, const Digest& prev_hash, Epoch epoch, EventKind kind,
                           const Json& payload)
{
    return body_object(height, prev_hash, epoch, kind, payload).dump();
}

Digest compute_event_hash(std::uint64_t height, const Digest& prev_hash, Epoch epoch, EventKind kind,
                          const Json& payload)
{
    return sha256(canonical_body(height, prev_hash, epoch, kind, payload));
}

std::string to_jsonl_line(const Event& event)
{
    Json line = body_object(event.height, event.prev_hash, event.epoch, event.kind, event.payload);
    line["hash"] = to_hex(event.hash);
    return line.dump();
}

std::optional<Event> parse_jsonl_line(std::string_view line)
{
    Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.size() != 6) return std::nullopt;
    for (const char* key : {"epoch", "hash", "height", "kind", "payload", "prev_hash"})
        if (!j.contains(key)) return std::nullopt;
    if (!j["height"].is_number_unsigned() || !j["epoch"].is_number_integer() || !j["kind"].is_string()
        || !j["payload"].is_object() || !j["prev_hash"].is_string() || !j["hash"].is_string())
        return std::nullopt;

    Event ev;
    ev.height = j["height"].get<std::uint64_t>();
    ev.epoch = j["epoch"].get<Epoch>();
    auto kind = event_kind_from_string(j["kind"].get<std::string>());
    auto prev = digest_from_hex(j["prev_hash"].get<std::string>());
    auto hash = digest_from_hex(j["hash"].get<std::string>());
    if (!kind || !prev || !hash) return std::nullopt;
    ev.kind = *kind;
    ev.prev_hash = *prev;
    ev.hash = *hash;
    ev.payload = std::move(j["payload"]);
    if (to_jsonl_line(ev) != line) return std::nullopt;
    return ev;
}

Event Ledger::make_next(EventKind kind, Json payload, Epoch epoch) const
{
    Event ev;
    ev.height = events_.size() + 1;
    ev.epoch = epoch;
    ev.kind = kind;
    ev.payload = std::move(payload);
    ev.prev_hash = tip_hash();
    ev.hash = compute_event_hash(ev.height, ev.prev_hash, ev.epoch, ev.kind, ev.payload);
    return ev;
}

const Event& Ledger::push(Event event)
{
    if (event.height != events_.size() + 1 || event.prev_hash != tip_hash())
        throw std::logic_error("ledger push out of order");
    events_.push_back(std::move(event));
    return events_.back();
}

void Ledger::write_jsonl(std::ostream& out) const
{
    for (const auto& ev : events_)
        out << to_jsonl_line(ev) << '\n';
}

std::optional<std::uint64_t> verify_chain(std::span<const Event> events)
{
    Digest prev{};
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& ev = events[i];
        const std::uint64_t expected_height = i + 1;
        if (ev.height != expected_height || ev.prev_hash != prev
            || ev.hash != compute_event_hash(ev.height, ev.prev_hash, ev.epoch, ev.kind, ev.payload))
            return expected_height;
        prev = ev.hash;
    }
    return std::nullopt;
}

LoadedLedger load_jsonl(std::istream& in)
{
    const std::string content{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    LoadedLedger out;
    std::size_t pos = 0;
    std::uint64_t line_no = 0;
    while (pos < content.size()) {
        ++line_no;
        const std::size_t nl = content.find('\n', pos);
        // a final record without its newline is not canonical output
        if (nl == std::string::npos) {
            out.first_invalid = line_no;
            break;
        }
        auto ev = parse_jsonl_line(std::string_view(content).substr(pos, nl - pos));
        if (!ev) {
            out.first_invalid = line_no;
            break;
        }
        out.events.push_back(std::move(*ev));
        pos = nl + 1;
    }
    if (auto chain = verify_chain(out.events)) {
        out.first_invalid = out.first_invalid ? std::min(*out.first_invalid, *chain) : *chain;
        out.events.resize(*chain - 1);
    }
    return out;
}

std::int64_t field_int(const Json& payload, const char* key)
{
    const Json& v = field(payload, key);
    if (!v.is_number_integer()) bad_field(key);
    return v.get<std::int64_t>();
}

bool field_bool(const Json& payload, const char* key)
{
    const Json& v = field(payload, key);
    if (!v.is_boolean()) bad_field(key);
    return v.get<bool>();
}

const std::string& field_str(const Json& payload, const char* key)
{
    const Json& v = field(payload, key);
    if (!v.is_string()) bad_field(key);
    return v.get_ref<const std::string&>();
}

PersonId field_pk(const Json& payload, const char* key)
{
    auto pk = PersonId::parse(field_str(payload, key));
    if (!pk) bad_field(key);
    return *pk;
}

Digest field_digest(const Json& payload, const char* key)
{
    auto d = digest_from_hex(field_str(payload, key));
    if (!d) bad_field(key);
    return *d;
}

const Json& field_array(const Json& payload, const char* key)
{
    const Json& v = field(payload, key);
    if (!v.is_array()) bad_field(key);
    return v;
}

} // namespace uniqueid
