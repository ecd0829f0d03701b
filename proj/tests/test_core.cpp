#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fastpay/authority.hpp"
#include "fastpay/committee.hpp"
#include "fastpay/crypto.hpp"
#include "fastpay/types.hpp"

using namespace fastpay;

namespace {

Committee make_committee(std::size_t n)
{
    std::vector<AuthorityInfo> members;
    for (std::size_t i = 0; i < n; ++i) {
        members.push_back({"a" + std::to_string(i), KeyPair::from_label("core:" + std::to_string(i)).public_key()});
    }
    return Committee::from_members(std::move(members));
}

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

}  // namespace

TEST(Amount, CheckedArithmetic)
{
    EXPECT_EQ(Amount(3).checked_add(Amount(4)), Amount(7));
    EXPECT_EQ(Amount(7).checked_sub(Amount(7)), Amount(0));
    EXPECT_EQ(code_of([] { Amount(3).checked_sub(Amount(4)); }), ErrorCode::AmountOverflow);
    EXPECT_EQ(code_of([] { Amount(UINT64_MAX).checked_add(Amount(1)); }), ErrorCode::AmountOverflow);
}

TEST(Balance, MayGoNegativeButNeverWraps)
{
    auto b = Balance(0).checked_sub(Amount(5));
    EXPECT_EQ(b.units(), -5);
    EXPECT_FALSE(b.covers(Amount(1)));
    EXPECT_TRUE(Balance(5).covers(Amount(5)));
    EXPECT_EQ(Balance::from(Amount(12)).units(), 12);
    EXPECT_EQ(code_of([] { Balance::from(Amount(UINT64_MAX)); }), ErrorCode::AmountOverflow);
    EXPECT_EQ(code_of([] { Balance(INT64_MAX).checked_add(Amount(1)); }), ErrorCode::AmountOverflow);
    EXPECT_EQ(code_of([] { Balance(INT64_MIN).checked_sub(Amount(1)); }), ErrorCode::AmountOverflow);
}

TEST(SequenceNumber, IncrementsByOne)
{
    EXPECT_EQ(SequenceNumber(0).next(), SequenceNumber(1));
    EXPECT_EQ(code_of([] { SequenceNumber(UINT64_MAX).next(); }), ErrorCode::AmountOverflow);
}

TEST(Hex, RoundTripAndRejects)
{
    Bytes b{0x00, 0x7f, 0xff, 0x10};
    EXPECT_EQ(to_hex(b), "007fff10");
    EXPECT_EQ(from_hex("007FFF10"), b);
    EXPECT_EQ(code_of([] { from_hex("abc"); }), ErrorCode::DecodeError);
    EXPECT_EQ(code_of([] { from_hex("zz"); }), ErrorCode::DecodeError);
}

// Oracle values from FIPS 180-2 and RFC 8032, section 7.1, test 1.
TEST(Crypto, Sha256KnownAnswer)
{
    std::string abc = "abc";
    auto d = sha256(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()));
    EXPECT_EQ(to_hex(d), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Crypto, Ed25519Rfc8032Vector1)
{
    auto seed = array_from_hex<32>("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60");
    auto key = KeyPair::from_seed(seed);
    EXPECT_EQ(key.public_key().hex(), "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
    auto sig = key.sign({});
    EXPECT_EQ(sig.hex(),
              "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0"
              "595bbe24655141438e7a100b");
    EXPECT_TRUE(verify(key.public_key(), {}, sig));
    EXPECT_EQ(key.seed(), seed);
}

TEST(Crypto, SignVerifyRejectsAnySingleByteMutation)
{
    std::mt19937_64 rng(7);
    for (int round = 0; round < 20; ++round) {
        auto key = KeyPair::generate();
        Bytes msg(1 + rng() % 100);
        for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
        auto sig = key.sign(msg);
        ASSERT_TRUE(verify(key.public_key(), msg, sig));
        for (std::size_t i = 0; i < msg.size(); ++i) {
            auto m = msg;
            m[i] ^= static_cast<std::uint8_t>(1 + rng() % 255);
            EXPECT_FALSE(verify(key.public_key(), m, sig));
        }
        for (std::size_t i = 0; i < Signature::kSize; ++i) {
            auto s = sig;
            s.bytes[i] ^= static_cast<std::uint8_t>(1 + rng() % 255);
            EXPECT_FALSE(verify(key.public_key(), msg, s));
        }
    }
}

TEST(Address, DeterministicFixedWidthHashOfKey)
{
    auto k = KeyPair::generate();
    EXPECT_EQ(address_of(k.public_key()), address_of(k.public_key()));
    EXPECT_EQ(address_of(k.public_key()).bytes.size(), 32u);
    EXPECT_EQ(address_of(k.public_key()).bytes, sha256(k.public_key().bytes));
    std::set<Address> seen;
    for (int i = 0; i < 200; ++i) seen.insert(address_of(KeyPair::generate().public_key()));
    EXPECT_EQ(seen.size(), 200u);
}

TEST(Committee, QuorumThreshold)
{
    EXPECT_EQ(make_committee(1).quorum_threshold(), 1u);
    EXPECT_EQ(make_committee(4).quorum_threshold(), 3u);
    EXPECT_EQ(make_committee(10).quorum_threshold(), 7u);
    EXPECT_EQ(make_committee(10).faults_tolerated(), 3u);
}

TEST(Committee, RejectsBadSizesAndDuplicateNames)
{
    for (std::size_t n : {0u, 2u, 3u, 5u, 6u}) {
        EXPECT_EQ(code_of([n] { make_committee(n); }), ErrorCode::InvalidCommittee) << n;
    }
    auto k = KeyPair::from_label("dup").public_key();
    EXPECT_EQ(code_of([&] { Committee::from_members({{"x", k}, {"x", k}, {"y", k}, {"z", k}}); }),
              ErrorCode::InvalidCommittee);
    EXPECT_EQ(code_of([&] { Committee({{"x", k}}, 1); }), ErrorCode::InvalidCommittee);
}

// Any two quorums share at least f+1 members; checked by enumerating every
// pair of (2f+1)-subsets for f in 0..4.
TEST(Committee, QuorumsIntersectInFPlusOne)
{
    for (std::size_t f = 0; f <= 4; ++f) {
        const std::size_t n = 3 * f + 1;
        const std::size_t q = 2 * f + 1;
        std::vector<std::uint32_t> quorums;
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
            if (static_cast<std::size_t>(__builtin_popcount(mask)) == q) quorums.push_back(mask);
        }
        std::size_t smallest = n;
        for (std::size_t i = 0; i < quorums.size(); ++i) {
            for (std::size_t j = i; j < quorums.size(); ++j) {
                smallest = std::min<std::size_t>(smallest, __builtin_popcount(quorums[i] & quorums[j]));
            }
        }
        EXPECT_EQ(smallest, f + 1) << "f=" << f;
    }
}

TEST(Sharding, SingleShardAndDeterminism)
{
    for (int i = 0; i < 100; ++i) {
        auto a = address_of(KeyPair::generate().public_key());
        EXPECT_EQ(shard_of(a, 1), 0u);
        EXPECT_EQ(shard_of(a, 7), shard_of(a, 7));
    }
}

TEST(Sharding, FirstEightBytesLittleEndianModulo)
{
    Address a;
    a.bytes[0] = 0x05;
    a.bytes[1] = 0x01;  // 0x0105 = 261
    EXPECT_EQ(shard_of(a, 4), 261u % 4);
    EXPECT_EQ(shard_of(a, 7), 261u % 7);
}

TEST(Sharding, UniformOverTenThousandAddresses)
{
    std::map<ShardId, int> counts;
    for (int i = 0; i < 10000; ++i) {
        ++counts[shard_of(address_of(KeyPair::from_label("uniform:" + std::to_string(i)).public_key()), 4)];
    }
    ASSERT_EQ(counts.size(), 4u);
    for (const auto& [shard, count] : counts) {
        EXPECT_GE(count, 2375) << shard;
        EXPECT_LE(count, 2625) << shard;
    }
}
