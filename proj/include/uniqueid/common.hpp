#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace uniqueid {

using Digest = std::array<std::uint8_t, 32>;

/// Token amounts are integer base units; there are no fractional tokens.
using Amount = std::int64_t;
using Epoch = std::int64_t;

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Parses exactly 64 lowercase hex characters. Uppercase is rejected so that
/// every digest has a single textual form.
std::optional<Digest> digest_from_hex(std::string_view hex);

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view bytes);

void append_be64(std::string& out, std::uint64_t value);
std::uint64_t read_be64(std::span<const std::uint8_t> bytes);

struct PersonId {
    Digest bytes{};

    auto operator<=>(const PersonId&) const = default;

    std::string hex() const { return to_hex(bytes); }

    /// Named system accounts ("system", "treasury", ...) are SHA-256 of a label.
    static PersonId from_label(std::string_view label) { return PersonId{sha256(label)}; }
    static std::optional<PersonId> parse(std::string_view hex);
};

enum class ErrorCode {
    InvalidEvent,
    UnknownIdentity,
    DuplicatePk,
    GateUnsatisfied,
    NoEligibleVerifiersInCity,
    NotPending,
    WrongVerifier,
    ReassignmentLimitReached,
    NoRejectionPending,
    DedupPending,
    TooFewMembers,
    UnverifiedMember,
    InsufficientApprovals,
    PkInUse,
    AlreadyExpired,
    Unverified,
    SelfDelegation,
    AllocationMismatch,
    InsufficientBalance,
    NoActiveLock,
    TooFewVerified,
    NoVotesCast,
    LayersEmpty,
    NotWhitelisted,
    NotPassed,
    QuotaExhausted,
    NotAuthorized,
    TargetNotVerified,
    DeadlinePassed,
    InvalidCounts,
    BudgetExceeded,
    ModalityMismatch,
    CalibrationFailed,
    ConfigInvalid,
    InsufficientGenesisVerifiers,
};

std::string_view to_string(ErrorCode code);

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace uniqueid
