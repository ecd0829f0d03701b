#include "fastpay/messages.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace fastpay {

namespace {

constexpr std::size_t kMinOrderSize = 32 + 32 + 33 + 8 + 8 + 1 + 64;
constexpr std::size_t kMinSignatureEntry = 1 + 64;
constexpr std::size_t kMinSyncOrderSize = 32 + 8 + 8 + 64;

void write_unsigned_order(ByteWriter& w, const TransferOrder& m)
{
    w.fixed(m.sender_key.bytes);
    w.fixed(m.sender.bytes);
    write(w, m.recipient);
    w.u64(m.amount.units());
    w.u64(m.sequence.value());
    w.flag(m.user_data.has_value());
    if (m.user_data) {
        w.fixed(*m.user_data);
    }
}

template <typename T>
void write_optional(ByteWriter& w, const std::optional<T>& v)
{
    w.flag(v.has_value());
    if (v) {
        write(w, *v);
    }
}

template <typename T>
void read_optional(ByteReader& r, std::optional<T>& v)
{
    if (r.flag()) {
        T inner{};
        read(r, inner);
        v = std::move(inner);
    } else {
        v.reset();
    }
}

template <typename T>
void write_list(ByteWriter& w, const std::vector<T>& items)
{
    w.u32(static_cast<std::uint32_t>(items.size()));
    for (const auto& item : items) {
        write(w, item);
    }
}

template <typename T>
void read_list(ByteReader& r, std::vector<T>& items, std::size_t min_element_size)
{
    auto n = r.count(min_element_size);
    items.clear();
    items.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        T item{};
        read(r, item);
        items.push_back(std::move(item));
    }
}

}  // namespace

// --- TransferOrder -----------------------------------------------------------

TransferOrder TransferOrder::create(const KeyPair& sender, const Recipient& recipient, Amount amount,
                                    SequenceNumber sequence, std::optional<UserData> user_data)
{
    ensure(!amount.is_zero(), ErrorCode::ZeroAmount, "transfer amount must be positive");
    TransferOrder order;
    order.sender_key = sender.public_key();
    order.sender = address_of(sender.public_key());
    order.recipient = recipient;
    order.amount = amount;
    order.sequence = sequence;
    order.user_data = user_data;
    order.signature = sender.sign(order.signing_bytes());
    return order;
}

Bytes TransferOrder::signing_bytes() const
{
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(MessageKind::TransferOrder));
    write_unsigned_order(w, *this);
    return w.take();
}

bool TransferOrder::has_valid_signature() const
{
    return !amount.is_zero() && address_of(sender_key) == sender && verify(sender_key, signing_bytes(), signature);
}

Digest TransferOrder::digest() const
{
    return sha256(encode(*this));
}

// --- SignedTransferOrder -----------------------------------------------------

SignedTransferOrder SignedTransferOrder::create(const TransferOrder& order, const std::string& authority,
                                                const KeyPair& key)
{
    return SignedTransferOrder{order, authority, key.sign(order.signing_bytes())};
}

void SignedTransferOrder::check(const Committee& committee) const
{
    const auto* member = committee.find(authority);
    ensure(member != nullptr, ErrorCode::InvalidVote, fmt::format("vote from unknown authority '{}'", authority));
    ensure(verify(member->key, order.signing_bytes(), signature), ErrorCode::InvalidVote,
           fmt::format("vote signature from '{}' does not verify", authority));
}

// --- PrimarySynchronizationOrder ---------------------------------------------

Bytes PrimarySynchronizationOrder::signing_bytes() const
{
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(MessageKind::PrimarySynchronizationOrder));
    w.fixed(recipient.bytes);
    w.u64(amount.units());
    w.u64(transaction_index);
    return w.take();
}

bool PrimarySynchronizationOrder::has_valid_signature(const PublicKey& ledger_key) const
{
    return verify(ledger_key, signing_bytes(), ledger_signature);
}

// --- cross-shard -------------------------------------------------------------

Bytes CrossShardUpdate::signing_bytes() const
{
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(MessageKind::CrossShardUpdate));
    w.u32(source_shard);
    w.u32(shard_id);
    w.u64(channel_sequence);
    w.fixed(sha256(encode(certificate)));
    return w.take();
}

Bytes CrossShardAck::signing_bytes() const
{
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(MessageKind::CrossShardAck));
    w.u32(source_shard);
    w.u32(shard_id);
    w.u64(channel_sequence);
    return w.take();
}

// --- writers -----------------------------------------------------------------

void write(ByteWriter& w, const Recipient& m)
{
    w.u8(static_cast<std::uint8_t>(m.kind));
    w.fixed(m.address.bytes);
}

void write(ByteWriter& w, const TransferOrder& m)
{
    write_unsigned_order(w, m);
    w.fixed(m.signature.bytes);
}

void write(ByteWriter& w, const SignedTransferOrder& m)
{
    write(w, m.order);
    w.short_string(m.authority);
    w.fixed(m.signature.bytes);
}

void write(ByteWriter& w, const Certificate& m)
{
    write(w, m.order);
    w.u32(static_cast<std::uint32_t>(m.signatures.size()));
    for (const auto& s : m.signatures) {
        w.short_string(s.authority);
        w.fixed(s.signature.bytes);
    }
}

void write(ByteWriter& w, const ConfirmationOrder& m)
{
    write(w, m.certificate);
}

void write(ByteWriter& w, const PrimarySynchronizationOrder& m)
{
    w.fixed(m.recipient.bytes);
    w.u64(m.amount.units());
    w.u64(m.transaction_index);
    w.fixed(m.ledger_signature.bytes);
}

void write(ByteWriter& w, const RedeemTransaction& m)
{
    write(w, m.certificate);
}

void write(ByteWriter& w, const CrossShardUpdate& m)
{
    w.u32(m.source_shard);
    w.u32(m.shard_id);
    w.u64(m.channel_sequence);
    write(w, m.certificate);
    w.fixed(m.authority_signature.bytes);
}

void write(ByteWriter& w, const CrossShardAck& m)
{
    w.u32(m.source_shard);
    w.u32(m.shard_id);
    w.u64(m.channel_sequence);
    w.fixed(m.authority_signature.bytes);
}

void write(ByteWriter& w, const AccountInfoRequest& m)
{
    w.fixed(m.account.bytes);
    w.flag(m.certificate_query.has_value());
    if (m.certificate_query) {
        w.u64(m.certificate_query->value());
    }
    w.flag(m.received_page.has_value());
    if (m.received_page) {
        w.u64(m.received_page->start);
        w.u32(m.received_page->limit);
    }
    w.flag(m.include_confirmed);
    w.flag(m.include_synchronized);
}

void write(ByteWriter& w, const AccountInfoResponse& m)
{
    w.fixed(m.account.bytes);
    w.flag(m.owner_key.has_value());
    if (m.owner_key) {
        w.fixed(m.owner_key->bytes);
    }
    w.i64(m.balance.units());
    w.u64(m.next_sequence.value());
    write_optional(w, m.pending);
    w.u64(m.last_transaction);
    write_optional(w, m.requested_certificate);
    w.u64(m.received_count);
    write_list(w, m.received);
    write_list(w, m.confirmed);
    write_list(w, m.synchronized);
}

void write(ByteWriter& w, const ErrorReply& m)
{
    w.u8(static_cast<std::uint8_t>(m.code));
    w.u64(m.detail);
    w.short_string(m.message.size() > 255 ? std::string_view(m.message).substr(0, 255) : m.message);
}

// --- readers -----------------------------------------------------------------

void read(ByteReader& r, Recipient& m)
{
    auto tag = r.u8();
    ensure(tag <= 1, ErrorCode::DecodeError, "invalid recipient tag");
    m.kind = static_cast<Recipient::Kind>(tag);
    r.fixed(m.address.bytes);
}

void read(ByteReader& r, TransferOrder& m)
{
    r.fixed(m.sender_key.bytes);
    r.fixed(m.sender.bytes);
    read(r, m.recipient);
    m.amount = Amount(r.u64());
    m.sequence = SequenceNumber(r.u64());
    if (r.flag()) {
        UserData data{};
        r.fixed(data);
        m.user_data = data;
    } else {
        m.user_data.reset();
    }
    r.fixed(m.signature.bytes);
}

void read(ByteReader& r, SignedTransferOrder& m)
{
    read(r, m.order);
    m.authority = r.short_string();
    r.fixed(m.signature.bytes);
}

void read(ByteReader& r, Certificate& m)
{
    read(r, m.order);
    auto n = r.count(kMinSignatureEntry);
    m.signatures.clear();
    m.signatures.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        AuthoritySignature s;
        s.authority = r.short_string();
        r.fixed(s.signature.bytes);
        m.signatures.push_back(std::move(s));
    }
}

void read(ByteReader& r, ConfirmationOrder& m)
{
    read(r, m.certificate);
}

void read(ByteReader& r, PrimarySynchronizationOrder& m)
{
    r.fixed(m.recipient.bytes);
    m.amount = Amount(r.u64());
    m.transaction_index = r.u64();
    r.fixed(m.ledger_signature.bytes);
}

void read(ByteReader& r, RedeemTransaction& m)
{
    read(r, m.certificate);
}

void read(ByteReader& r, CrossShardUpdate& m)
{
    m.source_shard = r.u32();
    m.shard_id = r.u32();
    m.channel_sequence = r.u64();
    read(r, m.certificate);
    r.fixed(m.authority_signature.bytes);
}

void read(ByteReader& r, CrossShardAck& m)
{
    m.source_shard = r.u32();
    m.shard_id = r.u32();
    m.channel_sequence = r.u64();
    r.fixed(m.authority_signature.bytes);
}

void read(ByteReader& r, AccountInfoRequest& m)
{
    r.fixed(m.account.bytes);
    if (r.flag()) {
        m.certificate_query = SequenceNumber(r.u64());
    } else {
        m.certificate_query.reset();
    }
    if (r.flag()) {
        ReceivedPage page;
        page.start = r.u64();
        page.limit = r.u32();
        m.received_page = page;
    } else {
        m.received_page.reset();
    }
    m.include_confirmed = r.flag();
    m.include_synchronized = r.flag();
}

void read(ByteReader& r, AccountInfoResponse& m)
{
    r.fixed(m.account.bytes);
    if (r.flag()) {
        PublicKey key;
        r.fixed(key.bytes);
        m.owner_key = key;
    } else {
        m.owner_key.reset();
    }
    m.balance = Balance(r.i64());
    m.next_sequence = SequenceNumber(r.u64());
    read_optional(r, m.pending);
    m.last_transaction = r.u64();
    read_optional(r, m.requested_certificate);
    m.received_count = r.u64();
    read_list(r, m.received, kMinOrderSize);
    read_list(r, m.confirmed, kMinOrderSize);
    read_list(r, m.synchronized, kMinSyncOrderSize);
}

void read(ByteReader& r, ErrorReply& m)
{
    m.code = static_cast<ErrorCode>(r.u8());
    m.detail = r.u64();
    m.message = r.short_string();
}

// --- certificates ------------------------------------------------------------

Certificate make_certificate(const TransferOrder& order, std::span<const SignedTransferOrder> votes,
                             const Committee& committee)
{
    std::set<std::string> seen;
    Certificate cert;
    cert.order = order;
    for (const auto& vote : votes) {
        ensure(vote.order == order, ErrorCode::InvalidVote, "vote is over a different transfer order");
        vote.check(committee);
        if (!seen.insert(vote.authority).second) {
            continue;
        }
        if (cert.signatures.size() < committee.quorum_threshold()) {
            cert.signatures.push_back({vote.authority, vote.signature});
        }
    }
    ensure(cert.signatures.size() >= committee.quorum_threshold(), ErrorCode::InsufficientVotes,
           fmt::format("{} distinct valid votes, quorum is {}", cert.signatures.size(), committee.quorum_threshold()));
    std::sort(cert.signatures.begin(), cert.signatures.end(),
              [](const auto& a, const auto& b) { return a.authority < b.authority; });
    return cert;
}

void check_certificate(const Certificate& certificate, const Committee& committee)
{
    std::set<std::string_view> distinct;
    for (const auto& s : certificate.signatures) {
        ensure(committee.find(s.authority) != nullptr, ErrorCode::UnknownAuthority,
               fmt::format("certificate signed by unknown authority '{}'", s.authority));
        distinct.insert(s.authority);
    }
    ensure(distinct.size() >= committee.quorum_threshold(), ErrorCode::InsufficientQuorum,
           fmt::format("{} distinct signatures, quorum is {}", distinct.size(), committee.quorum_threshold()));

    const auto& order = certificate.order;
    ensure(order.has_valid_signature(), ErrorCode::BadSignature, "sender signature does not verify");
    auto message = order.signing_bytes();
    for (const auto& s : certificate.signatures) {
        ensure(verify(committee.find(s.authority)->key, message, s.signature), ErrorCode::BadSignature,
               fmt::format("signature of '{}' does not verify", s.authority));
    }
}

bool is_valid_certificate(const Certificate& certificate, const Committee& committee)
{
    try {
        check_certificate(certificate, committee);
        return true;
    } catch (const FastPayError&) {
        return false;
    }
}

}  // namespace fastpay
