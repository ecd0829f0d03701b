#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastpay/committee.hpp"
#include "fastpay/crypto.hpp"
#include "fastpay/encoding.hpp"
#include "fastpay/types.hpp"

namespace fastpay {

// One-byte kind tags. They prefix signing inputs and label envelopes
// (see docs/wire-format.md).
enum class MessageKind : std::uint8_t {
    TransferOrder = 1,
    SignedTransferOrder = 2,
    ConfirmationOrder = 3,
    PrimarySynchronizationOrder = 4,
    RedeemTransaction = 5,
    CrossShardUpdate = 6,
    CrossShardAck = 7,
    AccountInfoRequest = 8,
    AccountInfoResponse = 9,
    ErrorReply = 10,
    Certificate = 11,
};

using UserData = std::array<std::uint8_t, 32>;

struct Recipient {
    enum class Kind : std::uint8_t { FastPay = 0, Primary = 1 };

    Kind kind = Kind::FastPay;
    Address address;

    static Recipient fastpay(const Address& a) { return {Kind::FastPay, a}; }
    static Recipient primary(const Address& a) { return {Kind::Primary, a}; }
    bool is_fastpay() const noexcept { return kind == Kind::FastPay; }
    bool is_primary() const noexcept { return kind == Kind::Primary; }

    friend bool operator==(const Recipient&, const Recipient&) = default;
};

struct TransferOrder {
    PublicKey sender_key;
    Address sender;
    Recipient recipient;
    Amount amount;
    SequenceNumber sequence;
    std::optional<UserData> user_data;
    Signature signature;

    // Builds and signs an order. Rejects zero amounts.
    static TransferOrder create(const KeyPair& sender, const Recipient& recipient, Amount amount,
                                SequenceNumber sequence, std::optional<UserData> user_data = std::nullopt);

    // Kind tag followed by every field except the signature.
    Bytes signing_bytes() const;
    bool has_valid_signature() const;
    Digest digest() const;

    friend bool operator==(const TransferOrder&, const TransferOrder&) = default;
};

// A vote: one authority's counter-signature on a transfer order.
struct SignedTransferOrder {
    TransferOrder order;
    std::string authority;
    Signature signature;

    static SignedTransferOrder create(const TransferOrder& order, const std::string& authority, const KeyPair& key);

    // Throws InvalidVote when the authority is unknown or the signature fails.
    void check(const Committee& committee) const;

    friend bool operator==(const SignedTransferOrder&, const SignedTransferOrder&) = default;
};

struct AuthoritySignature {
    std::string authority;
    Signature signature;

    friend bool operator==(const AuthoritySignature&, const AuthoritySignature&) = default;
};

// A transfer order plus a quorum of authority signatures, sorted by name.
struct Certificate {
    TransferOrder order;
    std::vector<AuthoritySignature> signatures;

    const TransferOrder& value() const noexcept { return order; }
    const Address& sender() const noexcept { return order.sender; }
    const Recipient& recipient() const noexcept { return order.recipient; }
    Amount amount() const noexcept { return order.amount; }
    SequenceNumber sequence() const noexcept { return order.sequence; }

    friend bool operator==(const Certificate&, const Certificate&) = default;
};

struct ConfirmationOrder {
    Certificate certificate;
    friend bool operator==(const ConfirmationOrder&, const ConfirmationOrder&) = default;
};

// Funding event emitted by the Primary ledger. transaction_index counts the
// funding stream of the recipient's shard and is signed by the ledger key.
struct PrimarySynchronizationOrder {
    Address recipient;
    Amount amount;
    std::uint64_t transaction_index = 0;
    Signature ledger_signature;

    Bytes signing_bytes() const;
    bool has_valid_signature(const PublicKey& ledger_key) const;

    friend bool operator==(const PrimarySynchronizationOrder&, const PrimarySynchronizationOrder&) = default;
};

struct RedeemTransaction {
    Certificate certificate;
    friend bool operator==(const RedeemTransaction&, const RedeemTransaction&) = default;
};

// Credit sent from the sender's shard to the recipient's shard of the same
// authority. (source_shard, shard_id, channel_sequence) identifies the
// delivery; the authority signs it with its own key.
struct CrossShardUpdate {
    ShardId source_shard = 0;
    ShardId shard_id = 0;
    std::uint64_t channel_sequence = 0;
    Certificate certificate;
    Signature authority_signature;

    Bytes signing_bytes() const;

    friend bool operator==(const CrossShardUpdate&, const CrossShardUpdate&) = default;
};

struct CrossShardAck {
    ShardId source_shard = 0;
    ShardId shard_id = 0;
    std::uint64_t channel_sequence = 0;
    Signature authority_signature;

    Bytes signing_bytes() const;

    friend bool operator==(const CrossShardAck&, const CrossShardAck&) = default;
};

struct ReceivedPage {
    std::uint64_t start = 0;
    std::uint32_t limit = 0;
    friend bool operator==(const ReceivedPage&, const ReceivedPage&) = default;
};

struct AccountInfoRequest {
    Address account;
    std::optional<SequenceNumber> certificate_query;
    std::optional<ReceivedPage> received_page;
    bool include_confirmed = false;
    bool include_synchronized = false;

    friend bool operator==(const AccountInfoRequest&, const AccountInfoRequest&) = default;
};

struct AccountInfoResponse {
    Address account;
    std::optional<PublicKey> owner_key;
    Balance balance;
    SequenceNumber next_sequence;
    std::optional<SignedTransferOrder> pending;
    std::uint64_t last_transaction = 0;  // of the serving shard
    std::optional<Certificate> requested_certificate;
    std::uint64_t received_count = 0;
    std::vector<Certificate> received;
    std::vector<Certificate> confirmed;
    std::vector<PrimarySynchronizationOrder> synchronized;

    friend bool operator==(const AccountInfoResponse&, const AccountInfoResponse&) = default;
};

struct ErrorReply {
    ErrorCode code = ErrorCode::InvalidRequest;
    std::uint64_t detail = 0;
    std::string message;

    friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

// --- canonical encoding ------------------------------------------------------

void write(ByteWriter& w, const Recipient& m);
void write(ByteWriter& w, const TransferOrder& m);
void write(ByteWriter& w, const SignedTransferOrder& m);
void write(ByteWriter& w, const Certificate& m);
void write(ByteWriter& w, const ConfirmationOrder& m);
void write(ByteWriter& w, const PrimarySynchronizationOrder& m);
void write(ByteWriter& w, const RedeemTransaction& m);
void write(ByteWriter& w, const CrossShardUpdate& m);
void write(ByteWriter& w, const CrossShardAck& m);
void write(ByteWriter& w, const AccountInfoRequest& m);
void write(ByteWriter& w, const AccountInfoResponse& m);
void write(ByteWriter& w, const ErrorReply& m);

void read(ByteReader& r, Recipient& m);
void read(ByteReader& r, TransferOrder& m);
void read(ByteReader& r, SignedTransferOrder& m);
void read(ByteReader& r, Certificate& m);
void read(ByteReader& r, ConfirmationOrder& m);
void read(ByteReader& r, PrimarySynchronizationOrder& m);
void read(ByteReader& r, RedeemTransaction& m);
void read(ByteReader& r, CrossShardUpdate& m);
void read(ByteReader& r, CrossShardAck& m);
void read(ByteReader& r, AccountInfoRequest& m);
void read(ByteReader& r, AccountInfoResponse& m);
void read(ByteReader& r, ErrorReply& m);

template <typename T>
Bytes encode(const T& message)
{
    ByteWriter w;
    write(w, message);
    return w.take();
}

// Decodes exactly one message; trailing bytes are an error.
template <typename T>
T decode(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    T message{};
    read(r, message);
    r.expect_end();
    return message;
}

// --- certificates ------------------------------------------------------------

// Keeps the first 2f+1 distinct valid votes (by arrival order), sorted by
// authority name. Throws InvalidVote if any vote fails validation, and
// InsufficientVotes below the threshold.
Certificate make_certificate(const TransferOrder& order, std::span<const SignedTransferOrder> votes,
                             const Committee& committee);

// Pure validity check: >= 2f+1 distinct committee signatures that all verify
// over the embedded order, and a valid sender signature. Throws
// UnknownAuthority, InsufficientQuorum or BadSignature.
void check_certificate(const Certificate& certificate, const Committee& committee);

bool is_valid_certificate(const Certificate& certificate, const Committee& committee);

}  // namespace fastpay
