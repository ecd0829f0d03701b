#include "fastpay/primary_ledger.hpp"

#include <fmt/format.h>

#include "fastpay/authority.hpp"
#include "fastpay/json_io.hpp"

namespace fastpay {

PrimaryLedger::PrimaryLedger(Committee committee, std::uint32_t number_of_shards, KeyPair ledger_key)
    : committee_(std::move(committee)), number_of_shards_(number_of_shards), key_(std::move(ledger_key))
{
    ensure(number_of_shards_ >= 1, ErrorCode::ConfigError, "number of shards must be at least 1");
}

void PrimaryLedger::deposit(const Address& primary_account, Amount amount)
{
    auto& balance = primary_accounts_[primary_account];
    balance = balance.checked_add(amount);
}

Amount PrimaryLedger::primary_balance(const Address& primary_account) const
{
    auto it = primary_accounts_.find(primary_account);
    return it == primary_accounts_.end() ? Amount() : it->second;
}

PrimarySynchronizationOrder PrimaryLedger::sync_order_for(const FundingTransaction& tx) const
{
    PrimarySynchronizationOrder sync;
    sync.recipient = tx.recipient;
    sync.amount = tx.amount;
    sync.transaction_index = tx.shard_index;
    sync.ledger_signature = key_.sign(sync.signing_bytes());
    return sync;
}

std::pair<FundingTransaction, PrimarySynchronizationOrder> PrimaryLedger::fund(const Address& payer,
                                                                                const Address& recipient,
                                                                                Amount amount)
{
    ensure(!amount.is_zero(), ErrorCode::ZeroAmount, "funding amount must be positive");
    auto available = primary_balance(payer);
    ensure(available >= amount, ErrorCode::InsufficientPrimaryFunds,
           fmt::format("primary account holds {}, funding needs {}", available.units(), amount.units()));

    auto new_total = total_balance_.checked_add(amount);
    primary_accounts_[payer] = available.checked_sub(amount);
    total_balance_ = new_total;

    FundingTransaction tx;
    tx.recipient = recipient;
    tx.amount = amount;
    tx.transaction_index = fundings_.size() + 1;
    tx.shard = shard_of(recipient, number_of_shards_);
    tx.shard_index = ++shard_indices_[tx.shard];
    fundings_.push_back(tx);
    return {tx, sync_order_for(tx)};
}

Amount PrimaryLedger::redeem(const RedeemTransaction& transaction)
{
    const auto& certificate = transaction.certificate;
    try {
        check_certificate(certificate, committee_);
    } catch (const FastPayError& e) {
        fail(ErrorCode::InvalidCertificate, e.what());
    }
    ensure(certificate.recipient().is_primary(), ErrorCode::NotPrimaryRecipient,
           "certificate pays a FastPay account");
    ensure(!is_redeemed(certificate.sender(), certificate.sequence()), ErrorCode::AlreadyRedeemed,
           fmt::format("sequence {} of {} was already redeemed", certificate.sequence().value(),
                       certificate.sender().short_hex()));

    // Solvency makes this subtraction safe; a throw here means a safety bug.
    auto new_total = total_balance_.checked_sub(certificate.amount());
    redeem_log_[certificate.sender()].insert(certificate.sequence().value());
    redeemed_certificates_.push_back(certificate);
    total_balance_ = new_total;
    deposit(certificate.recipient().address, certificate.amount());
    return certificate.amount();
}

bool PrimaryLedger::is_redeemed(const Address& sender, SequenceNumber sequence) const
{
    auto it = redeem_log_.find(sender);
    return it != redeem_log_.end() && it->second.contains(sequence.value());
}

Amount PrimaryLedger::total_funding() const
{
    Amount sum;
    for (const auto& tx : fundings_) {
        sum = sum.checked_add(tx.amount);
    }
    return sum;
}

Amount PrimaryLedger::total_redeemed() const
{
    Amount sum;
    for (const auto& c : redeemed_certificates_) {
        sum = sum.checked_add(c.amount());
    }
    return sum;
}

Amount PrimaryLedger::funding_of(const Address& account) const
{
    Amount sum;
    for (const auto& tx : fundings_) {
        if (tx.recipient == account) {
            sum = sum.checked_add(tx.amount);
        }
    }
    return sum;
}

std::vector<PrimarySynchronizationOrder> PrimaryLedger::shard_stream(ShardId shard) const
{
    std::vector<PrimarySynchronizationOrder> out;
    for (const auto& tx : fundings_) {
        if (tx.shard == shard) {
            out.push_back(sync_order_for(tx));
        }
    }
    return out;
}

std::vector<PrimarySynchronizationOrder> PrimaryLedger::synchronization_orders_for(const Address& account) const
{
    auto shard = shard_of(account, number_of_shards_);
    std::uint64_t last = 0;
    for (const auto& tx : fundings_) {
        if (tx.recipient == account) {
            last = tx.shard_index;
        }
    }
    std::vector<PrimarySynchronizationOrder> out;
    for (const auto& tx : fundings_) {
        if (tx.shard == shard && tx.shard_index <= last) {
            out.push_back(sync_order_for(tx));
        }
    }
    return out;
}

nlohmann::json PrimaryLedger::to_json() const
{
    nlohmann::json fundings = nlohmann::json::array();
    for (const auto& tx : fundings_) {
        fundings.push_back({{"recipient", tx.recipient.hex()},
                            {"amount", tx.amount.units()},
                            {"transaction_index", tx.transaction_index},
                            {"shard", tx.shard},
                            {"shard_index", tx.shard_index}});
    }
    nlohmann::json redeemed = nlohmann::json::array();
    for (const auto& c : redeemed_certificates_) {
        redeemed.push_back(encode_hex(c));
    }
    nlohmann::json accounts = nlohmann::json::object();
    for (const auto& [addr, amount] : primary_accounts_) {
        accounts[addr.hex()] = amount.units();
    }
    auto seed = key_.seed();
    return {{"committee", committee_to_json(committee_)},
            {"number_of_shards", number_of_shards_},
            {"ledger_seed", to_hex(seed)},
            {"fundings", fundings},
            {"redeemed", redeemed},
            {"primary_accounts", accounts}};
}

PrimaryLedger PrimaryLedger::from_json(const nlohmann::json& j)
{
    try {
        auto seed = array_from_hex<KeyPair::kSeedSize>(j.at("ledger_seed").get<std::string>());
        PrimaryLedger ledger(committee_from_json(j.at("committee")), j.at("number_of_shards").get<std::uint32_t>(),
                             KeyPair::from_seed(seed));
        for (const auto& [addr, amount] : j.at("primary_accounts").items()) {
            ledger.primary_accounts_[Address::from_hex(addr)] = Amount(amount.get<std::uint64_t>());
        }
        for (const auto& f : j.at("fundings")) {
            FundingTransaction tx;
            tx.recipient = Address::from_hex(f.at("recipient").get<std::string>());
            tx.amount = Amount(f.at("amount").get<std::uint64_t>());
            tx.transaction_index = f.at("transaction_index").get<std::uint64_t>();
            tx.shard = f.at("shard").get<ShardId>();
            tx.shard_index = f.at("shard_index").get<std::uint64_t>();
            ledger.shard_indices_[tx.shard] = tx.shard_index;
            ledger.total_balance_ = ledger.total_balance_.checked_add(tx.amount);
            ledger.fundings_.push_back(tx);
        }
        for (const auto& hex : j.at("redeemed")) {
            auto c = decode_hex<Certificate>(hex.get<std::string>());
            ledger.redeem_log_[c.sender()].insert(c.sequence().value());
            ledger.total_balance_ = ledger.total_balance_.checked_sub(c.amount());
            ledger.redeemed_certificates_.push_back(std::move(c));
        }
        return ledger;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, fmt::format("malformed ledger file: {}", e.what()));
    }
}

}  // namespace fastpay
