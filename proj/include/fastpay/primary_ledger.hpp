#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fastpay/committee.hpp"
#include "fastpay/crypto.hpp"
#include "fastpay/messages.hpp"

namespace fastpay {

// A deposit into the FastPay contract. transaction_index is global; the
// synchronization order carries shard_index, the position in the funding
// stream of the recipient's shard.
struct FundingTransaction {
    Address recipient;
    Amount amount;
    std::uint64_t transaction_index = 0;
    ShardId shard = 0;
    std::uint64_t shard_index = 0;

    friend bool operator==(const FundingTransaction&, const FundingTransaction&) = default;
};

// Source of Primary-side facts a client needs to synchronise an account.
class FundingSource {
public:
    virtual ~FundingSource() = default;
    virtual Amount funding_of(const Address& account) const = 0;
    // The funding stream of the account's shard, up to and including the last
    // deposit into `account`.
    virtual std::vector<PrimarySynchronizationOrder> synchronization_orders_for(const Address& account) const = 0;
};

// Emulated Primary smart contract. Single-threaded: it stands in for one
// sequential chain.
class PrimaryLedger : public FundingSource {
public:
    PrimaryLedger(Committee committee, std::uint32_t number_of_shards, KeyPair ledger_key);

    const Committee& committee() const noexcept { return committee_; }
    const PublicKey& public_key() const noexcept { return key_.public_key(); }
    std::uint32_t number_of_shards() const noexcept { return number_of_shards_; }

    // Toy Primary account balances.
    void deposit(const Address& primary_account, Amount amount);
    Amount primary_balance(const Address& primary_account) const;

    std::pair<FundingTransaction, PrimarySynchronizationOrder> fund(const Address& payer, const Address& recipient,
                                                                     Amount amount);
    Amount redeem(const RedeemTransaction& transaction);

    Amount total_balance() const noexcept { return total_balance_; }
    std::uint64_t last_transaction() const noexcept { return fundings_.size(); }
    Amount total_funding() const;
    Amount total_redeemed() const;
    bool is_redeemed(const Address& sender, SequenceNumber sequence) const;

    const std::vector<FundingTransaction>& fundings() const noexcept { return fundings_; }
    const std::vector<Certificate>& redeemed_certificates() const noexcept { return redeemed_certificates_; }
    std::vector<PrimarySynchronizationOrder> shard_stream(ShardId shard) const;

    Amount funding_of(const Address& account) const override;
    std::vector<PrimarySynchronizationOrder> synchronization_orders_for(const Address& account) const override;

    nlohmann::json to_json() const;
    static PrimaryLedger from_json(const nlohmann::json& j);

private:
    PrimarySynchronizationOrder sync_order_for(const FundingTransaction& tx) const;

    Committee committee_;
    std::uint32_t number_of_shards_;
    KeyPair key_;
    Amount total_balance_;
    std::vector<FundingTransaction> fundings_;
    std::map<ShardId, std::uint64_t> shard_indices_;
    std::map<Address, std::set<std::uint64_t>> redeem_log_;
    std::vector<Certificate> redeemed_certificates_;
    std::map<Address, Amount> primary_accounts_;
};

}  // namespace fastpay
