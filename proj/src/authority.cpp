#include "fastpay/authority.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace fastpay {

ShardId shard_of(const Address& address, std::uint32_t number_of_shards)
{
    ensure(number_of_shards >= 1, ErrorCode::ConfigError, "number of shards must be at least 1");
    std::uint64_t prefix = 0;
    for (int i = 7; i >= 0; --i) {
        prefix = (prefix << 8) | address.bytes[static_cast<std::size_t>(i)];
    }
    return static_cast<ShardId>(prefix % number_of_shards);
}

AuthorityState::AuthorityState(std::string name, KeyPair key, Committee committee, PublicKey primary_key,
                               ShardId shard_id, std::uint32_t number_of_shards)
    : name_(std::move(name)),
      key_(std::move(key)),
      committee_(std::move(committee)),
      primary_key_(primary_key),
      shard_id_(shard_id),
      number_of_shards_(number_of_shards)
{
    ensure(number_of_shards_ >= 1 && shard_id_ < number_of_shards_, ErrorCode::ConfigError,
           fmt::format("shard {} out of range for {} shards", shard_id_, number_of_shards_));
    const auto* member = committee_.find(name_);
    ensure(member != nullptr && member->key == key_.public_key(), ErrorCode::ConfigError,
           fmt::format("authority '{}' is not a committee member with this key", name_));
}

const AccountOffchainState* AuthorityState::find_account(const Address& address) const
{
    auto it = accounts_.find(address);
    return it == accounts_.end() ? nullptr : &it->second;
}

AccountOffchainState& AuthorityState::account_or_insert(const Address& address)
{
    return accounts_[address];
}

void AuthorityState::credit(const Address& recipient, const Certificate& certificate)
{
    auto& account = account_or_insert(recipient);
    account.balance = account.balance.checked_add(certificate.amount());
    account.received.push_back(certificate);
}

SignedTransferOrder AuthorityState::handle_transfer_order(const TransferOrder& order)
{
    ensure(in_shard(order.sender), ErrorCode::WrongShard, "sender is not handled by this shard",
           which_shard(order.sender));
    ensure(order.has_valid_signature(), ErrorCode::InvalidSignature, "transfer order signature is invalid");

    auto it = accounts_.find(order.sender);
    ensure(it != accounts_.end(), ErrorCode::UnknownSender, "sender account does not exist");
    auto& account = it->second;

    if (account.pending) {
        // Identical retry: hand back the stored vote unchanged.
        ensure(account.pending->order == order, ErrorCode::PreviousTransferPending,
               "a different transfer order is pending", account.pending->order.sequence.value());
        return *account.pending;
    }
    ensure(account.next_sequence == order.sequence, ErrorCode::UnexpectedSequence,
           fmt::format("expected sequence {}, got {}", account.next_sequence.value(), order.sequence.value()),
           account.next_sequence.value());
    ensure(account.balance.covers(order.amount), ErrorCode::InsufficientBalance,
           fmt::format("balance {} below amount {}", account.balance.units(), order.amount.units()),
           static_cast<std::uint64_t>(std::max<std::int64_t>(account.balance.units(), 0)));

    if (!account.owner_key) {
        account.owner_key = order.sender_key;
    }
    account.pending = SignedTransferOrder::create(order, name_, key_);
    return *account.pending;
}

ConfirmationOutcome AuthorityState::handle_confirmation_order(const ConfirmationOrder& confirmation)
{
    const auto& certificate = confirmation.certificate;
    const auto& order = certificate.order;
    ensure(in_shard(order.sender), ErrorCode::WrongShard, "sender is not handled by this shard",
           which_shard(order.sender));
    try {
        check_certificate(certificate, committee_);
    } catch (const FastPayError& e) {
        fail(ErrorCode::InvalidCertificate, e.what());
    }

    auto& sender = account_or_insert(order.sender);
    if (sender.next_sequence > order.sequence) {
        return {};
    }
    ensure(sender.next_sequence == order.sequence, ErrorCode::MissingEarlierCertificates,
           fmt::format("certificates {}..{} are missing", sender.next_sequence.value(), order.sequence.value()),
           sender.next_sequence.value());

    // Settles unconditionally: the sender balance may go negative here.
    sender.balance = sender.balance.checked_sub(order.amount);
    sender.next_sequence = sender.next_sequence.next();
    sender.pending.reset();
    sender.confirmed.push_back(certificate);
    if (!sender.owner_key) {
        sender.owner_key = order.sender_key;
    }

    ConfirmationOutcome outcome;
    outcome.applied = true;
    if (order.recipient.is_primary()) {
        return outcome;
    }
    const auto& recipient = order.recipient.address;
    if (in_shard(recipient)) {
        credit(recipient, certificate);
        return outcome;
    }

    CrossShardUpdate update;
    update.source_shard = shard_id_;
    update.shard_id = which_shard(recipient);
    update.channel_sequence = next_channel_sequence_[update.shard_id]++;
    update.certificate = certificate;
    outcome.cross_shard = sign_update(std::move(update));
    return outcome;
}

CrossShardUpdate AuthorityState::sign_update(CrossShardUpdate update) const
{
    update.authority_signature = key_.sign(update.signing_bytes());
    return update;
}

bool AuthorityState::record_delivery(ShardId source, std::uint64_t channel_sequence)
{
    auto& inbox = inboxes_[source];
    if (channel_sequence < inbox.watermark || inbox.above.contains(channel_sequence)) {
        return false;
    }
    inbox.above.insert(channel_sequence);
    while (!inbox.above.empty() && *inbox.above.begin() == inbox.watermark) {
        inbox.above.erase(inbox.above.begin());
        ++inbox.watermark;
    }
    return true;
}

CrossShardAck AuthorityState::handle_cross_shard_commit(const CrossShardUpdate& update)
{
    ensure(update.shard_id == shard_id_, ErrorCode::WrongShard, "update addressed to another shard",
           update.shard_id);
    ensure(update.source_shard < number_of_shards_, ErrorCode::ChannelAuthentication, "unknown source shard");
    ensure(verify(key_.public_key(), update.signing_bytes(), update.authority_signature),
           ErrorCode::ChannelAuthentication, "cross-shard update is not signed by this authority");

    const auto& order = update.certificate.order;
    ensure(order.recipient.is_fastpay(), ErrorCode::PrimaryRecipient, "primary recipients never cross shards");
    ensure(in_shard(order.recipient.address), ErrorCode::WrongShard, "recipient is not handled by this shard",
           which_shard(order.recipient.address));

    if (record_delivery(update.source_shard, update.channel_sequence)) {
        credit(order.recipient.address, update.certificate);
    }

    CrossShardAck ack;
    ack.source_shard = update.source_shard;
    ack.shard_id = update.shard_id;
    ack.channel_sequence = update.channel_sequence;
    ack.authority_signature = key_.sign(ack.signing_bytes());
    return ack;
}

bool AuthorityState::verify_channel_ack(const CrossShardAck& ack) const
{
    return ack.source_shard == shard_id_ && verify(key_.public_key(), ack.signing_bytes(), ack.authority_signature);
}

void AuthorityState::handle_primary_synchronization_order(const PrimarySynchronizationOrder& sync)
{
    ensure(sync.has_valid_signature(primary_key_), ErrorCode::InvalidSignature,
           "synchronization order is not signed by the primary ledger");
    ensure(in_shard(sync.recipient), ErrorCode::WrongShard, "recipient is not handled by this shard",
           which_shard(sync.recipient));
    if (sync.transaction_index <= last_transaction_) {
        return;
    }
    ensure(sync.transaction_index == last_transaction_ + 1, ErrorCode::SkippedFundingIndex,
           fmt::format("expected funding index {}, got {}", last_transaction_ + 1, sync.transaction_index),
           last_transaction_);

    auto& account = account_or_insert(sync.recipient);
    account.balance = account.balance.checked_add(sync.amount);
    account.synchronized.push_back(sync);
    last_transaction_ += 1;
}

AccountInfoResponse AuthorityState::account_summary(const Address& address) const
{
    AccountInfoResponse response;
    response.account = address;
    response.last_transaction = last_transaction_;
    if (const auto* account = find_account(address)) {
        response.owner_key = account->owner_key;
        response.balance = account->balance;
        response.next_sequence = account->next_sequence;
        response.pending = account->pending;
        response.received_count = account->received.size();
    }
    return response;
}

AccountInfoResponse AuthorityState::handle_account_info_request(const AccountInfoRequest& request) const
{
    ensure(in_shard(request.account), ErrorCode::WrongShard, "account is not handled by this shard",
           which_shard(request.account));
    const auto* account = find_account(request.account);
    ensure(account != nullptr, ErrorCode::UnknownAccount, "account does not exist");

    auto response = account_summary(request.account);
    if (request.certificate_query) {
        auto seq = request.certificate_query->value();
        ensure(seq < account->confirmed.size(), ErrorCode::CertificateNotFound,
               fmt::format("no confirmed certificate at sequence {}", seq), account->next_sequence.value());
        response.requested_certificate = account->confirmed[seq];
    }
    if (request.received_page) {
        auto start = std::min<std::uint64_t>(request.received_page->start, account->received.size());
        auto limit = std::min(request.received_page->limit, kMaxReceivedPage);
        auto end = std::min<std::uint64_t>(start + limit, account->received.size());
        response.received.assign(account->received.begin() + static_cast<std::ptrdiff_t>(start),
                                 account->received.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (request.include_confirmed) {
        response.confirmed = account->confirmed;
    }
    if (request.include_synchronized) {
        response.synchronized = account->synchronized;
    }
    return response;
}

}  // namespace fastpay
