#include "fastpay/types.hpp"

#include <fmt/format.h>

namespace fastpay {

namespace {

int hex_value(char c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::string_view error_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::WrongShard: return "WrongShard";
    case ErrorCode::InvalidSignature: return "InvalidSignature";
    case ErrorCode::UnknownSender: return "UnknownSender";
    case ErrorCode::PreviousTransferPending: return "PreviousTransferPending";
    case ErrorCode::UnexpectedSequence: return "UnexpectedSequence";
    case ErrorCode::InsufficientBalance: return "InsufficientBalance";
    case ErrorCode::InvalidCertificate: return "InvalidCertificate";
    case ErrorCode::MissingEarlierCertificates: return "MissingEarlierCertificates";
    case ErrorCode::PrimaryRecipient: return "PrimaryRecipient";
    case ErrorCode::SkippedFundingIndex: return "SkippedFundingIndex";
    case ErrorCode::UnknownAccount: return "UnknownAccount";
    case ErrorCode::CertificateNotFound: return "CertificateNotFound";
    case ErrorCode::InsufficientVotes: return "InsufficientVotes";
    case ErrorCode::InvalidVote: return "InvalidVote";
    case ErrorCode::UnknownAuthority: return "UnknownAuthority";
    case ErrorCode::BadSignature: return "BadSignature";
    case ErrorCode::InsufficientQuorum: return "InsufficientQuorum";
    case ErrorCode::InsufficientPrimaryFunds: return "InsufficientPrimaryFunds";
    case ErrorCode::AlreadyRedeemed: return "AlreadyRedeemed";
    case ErrorCode::NotPrimaryRecipient: return "NotPrimaryRecipient";
    case ErrorCode::ZeroAmount: return "ZeroAmount";
    case ErrorCode::AmountOverflow: return "AmountOverflow";
    case ErrorCode::InvalidCommittee: return "InvalidCommittee";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::QuorumUnreachable: return "QuorumUnreachable";
    case ErrorCode::AuthorityRejection: return "AuthorityRejection";
    case ErrorCode::ChannelAuthentication: return "ChannelAuthentication";
    case ErrorCode::ScriptError: return "ScriptError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    }
    return "Unknown";
}

FastPayError::FastPayError(ErrorCode code, std::string message, std::uint64_t detail)
    : std::runtime_error(fmt::format("{}: {}", error_name(code), message)), code_(code), detail_(detail)
{
}

void fail(ErrorCode code, std::string message, std::uint64_t detail)
{
    throw FastPayError(code, std::move(message), detail);
}

std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

Bytes from_hex(std::string_view hex)
{
    ensure(hex.size() % 2 == 0, ErrorCode::DecodeError, "odd-length hex string");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_value(hex[i]);
        int lo = hex_value(hex[i + 1]);
        ensure(hi >= 0 && lo >= 0, ErrorCode::DecodeError, "invalid hex digit");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

Amount Amount::checked_add(Amount other) const
{
    if (units_ > std::numeric_limits<std::uint64_t>::max() - other.units_) {
        fail(ErrorCode::AmountOverflow, "amount addition overflows");
    }
    return Amount(units_ + other.units_);
}

Amount Amount::checked_sub(Amount other) const
{
    if (other.units_ > units_) {
        fail(ErrorCode::AmountOverflow, "amount subtraction underflows");
    }
    return Amount(units_ - other.units_);
}

Balance Balance::from(Amount amount)
{
    if (amount.units() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        fail(ErrorCode::AmountOverflow, "amount does not fit in a balance");
    }
    return Balance(static_cast<std::int64_t>(amount.units()));
}

Balance Balance::checked_add(Balance other) const
{
    std::int64_t out = 0;
    if (__builtin_add_overflow(units_, other.units_, &out)) {
        fail(ErrorCode::AmountOverflow, "balance addition overflows");
    }
    return Balance(out);
}

Balance Balance::checked_add(Amount amount) const
{
    return checked_add(Balance::from(amount));
}

Balance Balance::checked_sub(Amount amount) const
{
    std::int64_t out = 0;
    if (__builtin_sub_overflow(units_, Balance::from(amount).units(), &out)) {
        fail(ErrorCode::AmountOverflow, "balance subtraction overflows");
    }
    return Balance(out);
}

SequenceNumber SequenceNumber::next() const
{
    if (value_ == std::numeric_limits<std::uint64_t>::max()) {
        fail(ErrorCode::AmountOverflow, "sequence number overflows");
    }
    return SequenceNumber(value_ + 1);
}

}  // namespace fastpay
