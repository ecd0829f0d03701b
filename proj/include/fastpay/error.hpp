#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fastpay {

// Wire-stable error codes. Values are encoded as one byte in error replies,
// so existing numbers must never be reused.
enum class ErrorCode : std::uint8_t {
    WrongShard = 1,
    InvalidSignature = 2,
    UnknownSender = 3,
    PreviousTransferPending = 4,
    UnexpectedSequence = 5,
    InsufficientBalance = 6,
    InvalidCertificate = 7,
    MissingEarlierCertificates = 8,
    PrimaryRecipient = 9,
    SkippedFundingIndex = 10,
    UnknownAccount = 11,
    CertificateNotFound = 12,
    InsufficientVotes = 13,
    InvalidVote = 14,
    UnknownAuthority = 15,
    BadSignature = 16,
    InsufficientQuorum = 17,
    InsufficientPrimaryFunds = 18,
    AlreadyRedeemed = 19,
    NotPrimaryRecipient = 20,
    ZeroAmount = 21,
    AmountOverflow = 22,
    InvalidCommittee = 23,
    DecodeError = 24,
    QuorumUnreachable = 25,
    AuthorityRejection = 26,
    ChannelAuthentication = 27,
    ScriptError = 28,
    VersionMismatch = 29,
    ConfigError = 30,
    InvalidRequest = 31,
};

std::string_view error_name(ErrorCode code);

// Every protocol-level failure surfaces as a FastPayError. `detail` carries a
// machine-readable number for codes that need one (e.g. the authority's
// next_sequence for MissingEarlierCertificates).
class FastPayError : public std::runtime_error {
public:
    FastPayError(ErrorCode code, std::string message, std::uint64_t detail = 0);

    ErrorCode code() const noexcept { return code_; }
    std::uint64_t detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::uint64_t detail_;
};

[[noreturn]] void fail(ErrorCode code, std::string message, std::uint64_t detail = 0);

inline void ensure(bool condition, ErrorCode code, std::string_view message, std::uint64_t detail = 0)
{
    if (!condition) {
        fail(code, std::string(message), detail);
    }
}

}  // namespace fastpay
