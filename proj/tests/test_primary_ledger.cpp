#include <functional>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "fastpay/authority.hpp"
#include "fastpay/primary_ledger.hpp"

using namespace fastpay;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const FastPayError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::InvalidRequest;
}

struct Fixture {
    std::vector<KeyPair> keys;
    Committee committee;
    PrimaryLedger ledger;
    Address payer = address_of(KeyPair::from_label("ledger-payer").public_key());

    explicit Fixture(std::uint32_t shards = 1)
        : committee(build(keys)), ledger(committee, shards, KeyPair::from_label("ledger-key"))
    {
        ledger.deposit(payer, Amount(1000));
    }

    static Committee build(std::vector<KeyPair>& keys)
    {
        std::vector<AuthorityInfo> members;
        for (int i = 0; i < 4; ++i) {
            keys.push_back(KeyPair::from_label("ledger-auth:" + std::to_string(i)));
            members.push_back({"auth" + std::to_string(i), keys.back().public_key()});
        }
        return Committee::from_members(members);
    }

    Certificate certify(const TransferOrder& order, std::size_t signers = 3) const
    {
        std::vector<SignedTransferOrder> votes;
        for (std::size_t i = 0; i < signers; ++i) {
            votes.push_back(SignedTransferOrder::create(order, "auth" + std::to_string(i), keys[i]));
        }
        Certificate cert{order, {}};
        for (const auto& v : votes) cert.signatures.push_back({v.authority, v.signature});
        return cert;
    }

    Certificate withdrawal(const KeyPair& from, std::uint64_t amount, std::uint64_t seq) const
    {
        auto me = address_of(from.public_key());
        return certify(TransferOrder::create(from, Recipient::primary(me), Amount(amount), SequenceNumber(seq)));
    }

    // Contract balance == funding - redeemed.
    void expect_balance_identity() const
    {
        EXPECT_EQ(ledger.total_balance().units(), ledger.total_funding().units() - ledger.total_redeemed().units());
    }
};

}  // namespace

TEST(PrimaryLedger, FundingAddsUp)
{
    Fixture f;
    auto a = address_of(KeyPair::from_label("a").public_key());
    auto [tx1, sync1] = f.ledger.fund(f.payer, a, Amount(5));
    auto [tx2, sync2] = f.ledger.fund(f.payer, a, Amount(7));
    EXPECT_EQ(f.ledger.funding_of(a), Amount(12));
    EXPECT_EQ(tx1.transaction_index, 1u);
    EXPECT_EQ(tx2.transaction_index, 2u);
    EXPECT_EQ(sync1.transaction_index, 1u);
    EXPECT_EQ(sync2.transaction_index, 2u);
    EXPECT_TRUE(sync1.has_valid_signature(f.ledger.public_key()));
    EXPECT_EQ(f.ledger.primary_balance(f.payer), Amount(988));
    EXPECT_EQ(f.ledger.total_balance(), Amount(12));
    EXPECT_EQ(f.ledger.last_transaction(), 2u);
    f.expect_balance_identity();
}

TEST(PrimaryLedger, FundingRejections)
{
    Fixture f;
    auto a = address_of(KeyPair::from_label("a").public_key());
    EXPECT_EQ(code_of([&] { f.ledger.fund(f.payer, a, Amount(0)); }), ErrorCode::ZeroAmount);
    EXPECT_EQ(code_of([&] { f.ledger.fund(f.payer, a, Amount(1001)); }), ErrorCode::InsufficientPrimaryFunds);
    EXPECT_EQ(f.ledger.last_transaction(), 0u);
    EXPECT_EQ(f.ledger.total_balance(), Amount(0));
}

TEST(PrimaryLedger, RedeemExactlyOnce)
{
    Fixture f;
    auto alice = KeyPair::from_label("alice");
    auto me = address_of(alice.public_key());
    f.ledger.fund(f.payer, me, Amount(10));
    auto cert = f.withdrawal(alice, 4, 0);
    EXPECT_EQ(f.ledger.redeem({cert}), Amount(4));
    EXPECT_EQ(f.ledger.total_balance(), Amount(6));
    EXPECT_EQ(f.ledger.primary_balance(me), Amount(4));
    EXPECT_TRUE(f.ledger.is_redeemed(me, SequenceNumber(0)));
    f.expect_balance_identity();

    EXPECT_EQ(code_of([&] { f.ledger.redeem({cert}); }), ErrorCode::AlreadyRedeemed);
    EXPECT_EQ(f.ledger.total_balance(), Amount(6));
    EXPECT_EQ(f.ledger.primary_balance(me), Amount(4));
    EXPECT_EQ(f.ledger.redeemed_certificates().size(), 1u);
}

TEST(PrimaryLedger, RedeemRejections)
{
    Fixture f;
    auto alice = KeyPair::from_label("alice");
    auto bob = address_of(KeyPair::from_label("bob").public_key());
    f.ledger.fund(f.payer, address_of(alice.public_key()), Amount(10));
    auto to_bob = f.certify(TransferOrder::create(alice, Recipient::fastpay(bob), Amount(1), SequenceNumber(0)));
    EXPECT_EQ(code_of([&] { f.ledger.redeem({to_bob}); }), ErrorCode::NotPrimaryRecipient);
    auto thin = f.withdrawal(alice, 1, 0);
    thin.signatures.pop_back();
    EXPECT_EQ(code_of([&] { f.ledger.redeem({thin}); }), ErrorCode::InvalidCertificate);
    EXPECT_EQ(f.ledger.total_balance(), Amount(10));
}

TEST(PrimaryLedger, PerShardStreams)
{
    Fixture f(3);
    std::map<ShardId, std::uint64_t> expected;
    for (int i = 0; i < 30; ++i) {
        auto a = address_of(KeyPair::from_label("stream" + std::to_string(i)).public_key());
        auto [tx, sync] = f.ledger.fund(f.payer, a, Amount(1));
        EXPECT_EQ(tx.transaction_index, static_cast<std::uint64_t>(i + 1));
        EXPECT_EQ(tx.shard, shard_of(a, 3));
        EXPECT_EQ(sync.transaction_index, ++expected[tx.shard]);
    }
    for (ShardId s = 0; s < 3; ++s) {
        auto stream = f.ledger.shard_stream(s);
        ASSERT_EQ(stream.size(), expected[s]);
        for (std::size_t i = 0; i < stream.size(); ++i) EXPECT_EQ(stream[i].transaction_index, i + 1);
    }
}

TEST(PrimaryLedger, JsonRoundTrip)
{
    Fixture f;
    auto alice = KeyPair::from_label("alice");
    f.ledger.fund(f.payer, address_of(alice.public_key()), Amount(10));
    f.ledger.redeem({f.withdrawal(alice, 3, 0)});
    auto back = PrimaryLedger::from_json(f.ledger.to_json());
    EXPECT_EQ(back.to_json(), f.ledger.to_json());
    EXPECT_EQ(back.total_balance(), Amount(7));
    EXPECT_TRUE(back.is_redeemed(address_of(alice.public_key()), SequenceNumber(0)));
    EXPECT_EQ(code_of([&] { back.redeem({f.withdrawal(alice, 3, 0)}); }), ErrorCode::AlreadyRedeemed);
}

// Random fund/redeem sequences: the balance identity holds after every step
// and the contract balance never underflows.
TEST(PrimaryLedgerProperties, BalanceIdentityUnderRandomOperations)
{
    Fixture f;
    f.ledger.deposit(f.payer, Amount(1'000'000));
    std::vector<KeyPair> users;
    for (int i = 0; i < 4; ++i) users.push_back(KeyPair::from_label("user" + std::to_string(i)));
    std::vector<std::uint64_t> next(users.size(), 0), funded(users.size(), 0), withdrawn(users.size(), 0);
    std::vector<Certificate> issued;
    std::mt19937_64 rng(5);
    for (int step = 0; step < 300; ++step) {
        auto u = rng() % users.size();
        auto me = address_of(users[u].public_key());
        switch (rng() % 3) {
        case 0: {
            auto amount = 1 + rng() % 50;
            f.ledger.fund(f.payer, me, Amount(amount));
            funded[u] += amount;
            break;
        }
        case 1:
            if (funded[u] > withdrawn[u]) {
                auto amount = 1 + rng() % (funded[u] - withdrawn[u]);
                issued.push_back(f.withdrawal(users[u], amount, next[u]++));
                withdrawn[u] += amount;
                EXPECT_EQ(f.ledger.redeem({issued.back()}), Amount(amount));
            }
            break;
        case 2:
            if (!issued.empty()) {
                auto& c = issued[rng() % issued.size()];
                EXPECT_EQ(code_of([&] { f.ledger.redeem({c}); }), ErrorCode::AlreadyRedeemed);
            }
            break;
        }
        f.expect_balance_identity();
        ASSERT_LE(f.ledger.total_redeemed().units(), f.ledger.total_funding().units());
    }
}
