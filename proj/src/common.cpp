#include "uniqueid/common.hpp"

#include <openssl/sha.h>

namespace uniqueid {

std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace {
int hex_value(char c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}
} // namespace

std::optional<Digest> digest_from_hex(std::string_view hex)
{
    if (hex.size() != 64) return std::nullopt;
    Digest out{};
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int hi = hex_value(hex[2 * i]);
        const int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

Digest sha256(std::span<const std::uint8_t> bytes)
{
    Digest out{};
    SHA256(bytes.data(), bytes.size(), out.data());
    return out;
}

Digest sha256(std::string_view bytes)
{
    return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

void append_be64(std::string& out, std::uint64_t value)
{
    for (int shift = 56; shift >= 0; shift -= 8)
        out.push_back(static_cast<char>((value >> shift) & 0xff));
}

std::uint64_t read_be64(std::span<const std::uint8_t> bytes)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i)
        v = (v << 8) | bytes[i];
    return v;
}

std::optional<PersonId> PersonId::parse(std::string_view hex)
{
    auto d = digest_from_hex(hex);
    if (!d) return std::nullopt;
    return PersonId{*d};
}

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidEvent: return "InvalidEvent";
    case ErrorCode::UnknownIdentity: return "UnknownIdentity";
    case ErrorCode::DuplicatePk: return "DuplicatePk";
    case ErrorCode::GateUnsatisfied: return "GateUnsatisfied";
    case ErrorCode::NoEligibleVerifiersInCity: return "NoEligibleVerifiersInCity";
    case ErrorCode::NotPending: return "NotPending";
    case ErrorCode::WrongVerifier: return "WrongVerifier";
    case ErrorCode::ReassignmentLimitReached: return "ReassignmentLimitReached";
    case ErrorCode::NoRejectionPending: return "NoRejectionPending";
    case ErrorCode::DedupPending: return "DedupPending";
    case ErrorCode::TooFewMembers: return "TooFewMembers";
    case ErrorCode::UnverifiedMember: return "UnverifiedMember";
    case ErrorCode::InsufficientApprovals: return "InsufficientApprovals";
    case ErrorCode::PkInUse: return "PkInUse";
    case ErrorCode::AlreadyExpired: return "AlreadyExpired";
    case ErrorCode::Unverified: return "Unverified";
    case ErrorCode::SelfDelegation: return "SelfDelegation";
    case ErrorCode::AllocationMismatch: return "AllocationMismatch";
    case ErrorCode::InsufficientBalance: return "InsufficientBalance";
    case ErrorCode::NoActiveLock: return "NoActiveLock";
    case ErrorCode::TooFewVerified: return "TooFewVerified";
    case ErrorCode::NoVotesCast: return "NoVotesCast";
    case ErrorCode::LayersEmpty: return "LayersEmpty";
    case ErrorCode::NotWhitelisted: return "NotWhitelisted";
    case ErrorCode::NotPassed: return "NotPassed";
    case ErrorCode::QuotaExhausted: return "QuotaExhausted";
    case ErrorCode::NotAuthorized: return "NotAuthorized";
    case ErrorCode::TargetNotVerified: return "TargetNotVerified";
    case ErrorCode::DeadlinePassed: return "DeadlinePassed";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::ModalityMismatch: return "ModalityMismatch";
    case ErrorCode::CalibrationFailed: return "CalibrationFailed";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InsufficientGenesisVerifiers: return "InsufficientGenesisVerifiers";
    }
    return "Unknown";
}

} // namespace uniqueid
