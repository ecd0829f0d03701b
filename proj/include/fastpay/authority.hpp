#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fastpay/committee.hpp"
#include "fastpay/crypto.hpp"
#include "fastpay/messages.hpp"

namespace fastpay {

// Shard responsible for an address: the first 8 digest bytes, read as a
// little-endian integer, modulo the shard count. Identical across authorities
// running the same number of shards.
ShardId shard_of(const Address& address, std::uint32_t number_of_shards);

struct AccountOffchainState {
    std::optional<PublicKey> owner_key;
    Balance balance;
    SequenceNumber next_sequence;
    std::optional<SignedTransferOrder> pending;
    std::vector<Certificate> confirmed;
    std::vector<PrimarySynchronizationOrder> synchronized;
    std::vector<Certificate> received;

    friend bool operator==(const AccountOffchainState&, const AccountOffchainState&) = default;
};

struct ConfirmationOutcome {
    // False when the certificate was already settled and nothing changed.
    bool applied = false;
    std::optional<CrossShardUpdate> cross_shard;
};

// One shard of one authority. Single-writer: handlers are deterministic
// functions of (state, message) and must be called from one thread.
class AuthorityState {
public:
    static constexpr std::uint32_t kMaxReceivedPage = 64;

    AuthorityState(std::string name, KeyPair key, Committee committee, PublicKey primary_key,
                   ShardId shard_id = 0, std::uint32_t number_of_shards = 1);

    const std::string& name() const noexcept { return name_; }
    const Committee& committee() const noexcept { return committee_; }
    const PublicKey& public_key() const noexcept { return key_.public_key(); }
    ShardId shard_id() const noexcept { return shard_id_; }
    std::uint32_t number_of_shards() const noexcept { return number_of_shards_; }
    std::uint64_t last_transaction() const noexcept { return last_transaction_; }

    ShardId which_shard(const Address& address) const { return shard_of(address, number_of_shards_); }
    bool in_shard(const Address& address) const { return which_shard(address) == shard_id_; }

    SignedTransferOrder handle_transfer_order(const TransferOrder& order);
    ConfirmationOutcome handle_confirmation_order(const ConfirmationOrder& confirmation);
    CrossShardAck handle_cross_shard_commit(const CrossShardUpdate& update);
    void handle_primary_synchronization_order(const PrimarySynchronizationOrder& sync);
    AccountInfoResponse handle_account_info_request(const AccountInfoRequest& request) const;

    // Summary of an account after a confirmation or synchronization; the
    // reply body for those orders.
    AccountInfoResponse account_summary(const Address& address) const;

    // True when the ack for one of this shard's outgoing updates is signed by
    // this authority.
    bool verify_channel_ack(const CrossShardAck& ack) const;
    CrossShardUpdate sign_update(CrossShardUpdate update) const;

    const std::map<Address, AccountOffchainState>& accounts() const noexcept { return accounts_; }
    const AccountOffchainState* find_account(const Address& address) const;

    // Direct state access for fault-injection tests and audits of corrupted
    // states. Never used by protocol code.
    AccountOffchainState& mutable_account_for_testing(const Address& address) { return accounts_[address]; }

private:
    struct ChannelInbox {
        std::uint64_t watermark = 0;      // every sequence below is delivered
        std::set<std::uint64_t> above;    // delivered sequences >= watermark
    };

    AccountOffchainState& account_or_insert(const Address& address);
    void credit(const Address& recipient, const Certificate& certificate);
    bool record_delivery(ShardId source, std::uint64_t channel_sequence);

    std::string name_;
    KeyPair key_;
    Committee committee_;
    PublicKey primary_key_;
    ShardId shard_id_;
    std::uint32_t number_of_shards_;
    std::uint64_t last_transaction_ = 0;
    std::map<Address, AccountOffchainState> accounts_;
    std::map<ShardId, std::uint64_t> next_channel_sequence_;
    std::map<ShardId, ChannelInbox> inboxes_;
};

}  // namespace fastpay
