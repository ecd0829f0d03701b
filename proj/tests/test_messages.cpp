#include <random>

#include <gtest/gtest.h>

#include "fastpay/envelope.hpp"
#include "fastpay/messages.hpp"

using namespace fastpay;

namespace {

// Frozen wire bytes. Computed with an independent Ed25519/SHA-256
// implementation (Python `cryptography` + hashlib) from the byte layout in
// docs/wire-format.md: sender seed 00..1f, recipient ab*32, amount 4, seq 0,
// user_data 11*32; vote by seed 20..3f named "auth0".
constexpr const char* kOrderEnvelopeHex =
    "010103a107bff3ce10be1d70dd18e74bc09967e4d6309ba50d5f1ddc8664125531b856475aa75463474c0285df5dbf2bcab7"
    "3da651358839e9b77481b2eab107708c00abababababababababababababababababababababababababababababababab04"
    "000000000000000000000000000000011111111111111111111111111111111111111111111111111111111111111111a335"
    "cc74041502b29df9fc125746d64ac3233a3039753c79e70b452a2b70a68817df423be7b698c8007ffb1cc4f4f86d6a84522e"
    "1d784f51f9cb658eab5f5405";
constexpr const char* kVoteSignatureHex =
    "9bb5026248775a0c487869ef2ae059a2d335c1c0f44fc506ac16fc008ec690258abac491567bbceeb96ba9f40a54947674d1c0a0dc86"
    "52533a6457218d62490e";

std::array<std::uint8_t, 32> seed_from(std::uint8_t first)
{
    std::array<std::uint8_t, 32> s{};
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::uint8_t>(first + i);
    return s;
}

struct Fixture {
    std::vector<KeyPair> keys;
    Committee committee;

    explicit Fixture(std::size_t n) : committee(build(n, keys)) {}

    static Committee build(std::size_t n, std::vector<KeyPair>& keys)
    {
        std::vector<AuthorityInfo> members;
        for (std::size_t i = 0; i < n; ++i) {
            keys.push_back(KeyPair::from_label("msg-authority:" + std::to_string(i)));
            members.push_back({"auth" + std::to_string(i), keys.back().public_key()});
        }
        return Committee::from_members(std::move(members));
    }

    SignedTransferOrder vote(const TransferOrder& o, std::size_t i) const
    {
        return SignedTransferOrder::create(o, "auth" + std::to_string(i), keys[i]);
    }

    Certificate certify(const TransferOrder& o) const
    {
        std::vector<SignedTransferOrder> votes;
        for (std::size_t i = 0; i < committee.quorum_threshold(); ++i) votes.push_back(vote(o, i));
        return make_certificate(o, votes, committee);
    }
};

// --- random message generators -------------------------------------------------

struct Gen {
    std::mt19937_64 rng;

    template <std::size_t N>
    std::array<std::uint8_t, N> bytes()
    {
        std::array<std::uint8_t, N> out{};
        for (auto& b : out) b = static_cast<std::uint8_t>(rng());
        return out;
    }
    bool coin() { return rng() & 1; }
    std::uint64_t u64() { return rng(); }
    Address address() { return Address{bytes<32>()}; }
    std::string name()
    {
        std::string s(1 + rng() % 32, 'a');
        for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
        return s;
    }

    TransferOrder order()
    {
        TransferOrder o;
        o.sender_key = PublicKey{bytes<32>()};
        o.sender = address();
        o.recipient = coin() ? Recipient::fastpay(address()) : Recipient::primary(address());
        o.amount = Amount(1 + u64() % 1000000);
        o.sequence = SequenceNumber(u64() % 1000);
        if (coin()) o.user_data = bytes<32>();
        o.signature = Signature{bytes<64>()};
        return o;
    }
    SignedTransferOrder vote() { return {order(), name(), Signature{bytes<64>()}}; }
    Certificate certificate()
    {
        Certificate c{order(), {}};
        for (std::size_t i = 0, n = rng() % 8; i < n; ++i) c.signatures.push_back({name(), Signature{bytes<64>()}});
        return c;
    }
    PrimarySynchronizationOrder sync()
    {
        return {address(), Amount(u64()), u64(), Signature{bytes<64>()}};
    }
    CrossShardUpdate update()
    {
        return {static_cast<ShardId>(u64()), static_cast<ShardId>(u64()), u64(), certificate(), Signature{bytes<64>()}};
    }
    CrossShardAck ack()
    {
        return {static_cast<ShardId>(u64()), static_cast<ShardId>(u64()), u64(), Signature{bytes<64>()}};
    }
    AccountInfoRequest request()
    {
        AccountInfoRequest r;
        r.account = address();
        if (coin()) r.certificate_query = SequenceNumber(u64());
        if (coin()) r.received_page = ReceivedPage{u64(), static_cast<std::uint32_t>(u64())};
        r.include_confirmed = coin();
        r.include_synchronized = coin();
        return r;
    }
    AccountInfoResponse response()
    {
        AccountInfoResponse r;
        r.account = address();
        if (coin()) r.owner_key = PublicKey{bytes<32>()};
        r.balance = Balance(static_cast<std::int64_t>(u64()));
        r.next_sequence = SequenceNumber(u64());
        if (coin()) r.pending = vote();
        r.last_transaction = u64();
        if (coin()) r.requested_certificate = certificate();
        r.received_count = u64();
        for (std::size_t i = 0, n = rng() % 3; i < n; ++i) r.received.push_back(certificate());
        for (std::size_t i = 0, n = rng() % 3; i < n; ++i) r.confirmed.push_back(certificate());
        for (std::size_t i = 0, n = rng() % 3; i < n; ++i) r.synchronized.push_back(sync());
        return r;
    }
    ErrorReply error()
    {
        return {static_cast<ErrorCode>(1 + rng() % 31), u64(), name()};
    }
};

template <typename T>
void expect_round_trip(const T& m)
{
    auto bytes = encode(m);
    EXPECT_EQ(decode<T>(bytes), m);
    EXPECT_EQ(encode(m), bytes);
    auto sealed = seal(m);
    auto env = open_envelope(sealed);
    EXPECT_EQ(env.kind, MessageKindOf<T>::value);
    EXPECT_EQ(open_as<T>(env), m);
    // Every strict prefix is rejected.
    if (!bytes.empty()) {
        Bytes cut(bytes.begin(), bytes.end() - 1);
        EXPECT_THROW(decode<T>(cut), FastPayError);
    }
    auto extended = bytes;
    extended.push_back(0);
    EXPECT_THROW(decode<T>(extended), FastPayError);
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

TEST(Encoding, RoundTripFuzzEveryKind)
{
    Gen g{std::mt19937_64(2024)};
    for (int i = 0; i < 1000; ++i) {
        expect_round_trip(g.order());
        expect_round_trip(g.vote());
        expect_round_trip(g.certificate());
        expect_round_trip(ConfirmationOrder{g.certificate()});
        expect_round_trip(g.sync());
        expect_round_trip(RedeemTransaction{g.certificate()});
        expect_round_trip(g.update());
        expect_round_trip(g.ack());
        expect_round_trip(g.request());
        expect_round_trip(g.response());
        expect_round_trip(g.error());
    }
}

TEST(Encoding, InjectiveOnSingleFieldChanges)
{
    Gen g{std::mt19937_64(5)};
    for (int i = 0; i < 200; ++i) {
        auto base = g.order();
        auto a = base;
        a.amount = Amount(a.amount.units() + 1);
        auto b = base;
        b.sequence = b.sequence.next();
        auto c = base;
        c.recipient.kind = c.recipient.is_primary() ? Recipient::Kind::FastPay : Recipient::Kind::Primary;
        auto d = base;
        d.user_data = d.user_data ? std::nullopt : std::optional<UserData>(UserData{});
        for (const auto& other : {a, b, c, d}) {
            EXPECT_NE(encode(base), encode(other));
            EXPECT_NE(base.signing_bytes(), other.signing_bytes());
        }
    }
}

TEST(Encoding, FrozenTransferOrderBytes)
{
    auto sender = KeyPair::from_seed(seed_from(0));
    UserData data;
    data.fill(0x11);
    Address rcpt;
    rcpt.bytes.fill(0xab);
    auto order = TransferOrder::create(sender, Recipient::fastpay(rcpt), Amount(4), SequenceNumber(0), data);
    EXPECT_EQ(to_hex(seal(order)), kOrderEnvelopeHex);
    EXPECT_EQ(encode(order).size(), 210u);

    auto vote = SignedTransferOrder::create(order, "auth0", KeyPair::from_seed(seed_from(32)));
    EXPECT_EQ(vote.signature.hex(), kVoteSignatureHex);
    auto expected_vote = std::string(kOrderEnvelopeHex).substr(4) + "05" + to_hex(Bytes{'a', 'u', 't', 'h', '0'}) +
                         kVoteSignatureHex;
    EXPECT_EQ(to_hex(encode(vote)), expected_vote);

    // Decoding the frozen bytes gives back a valid order.
    auto decoded = open_as<TransferOrder>(open_envelope(from_hex(kOrderEnvelopeHex)));
    EXPECT_TRUE(decoded.has_valid_signature());
    EXPECT_EQ(decoded, order);
}

TEST(Encoding, FrozenSmallMessages)
{
    Address account;
    account.bytes.fill(0x01);
    AccountInfoRequest req;
    req.account = account;
    req.certificate_query = SequenceNumber(2);
    req.include_confirmed = true;
    EXPECT_EQ(to_hex(encode(req)), std::string(64, '0').replace(0, 64, to_hex(account.bytes)) +
                                       "01" "0200000000000000" "00" "01" "00");

    ErrorReply err{ErrorCode::MissingEarlierCertificates, 3, "gap"};
    EXPECT_EQ(to_hex(seal(err)), "010a" "08" "0300000000000000" "03" "676170");

    CrossShardAck ack{1, 2, 258, Signature{}};
    EXPECT_EQ(to_hex(encode(ack)).substr(0, 32), "01000000" "02000000" "0201000000000000");
}

TEST(Encoding, RejectsMalformedInput)
{
    Gen g{std::mt19937_64(9)};
    auto bytes = encode(g.order());
    bytes[64] = 7;  // recipient tag
    EXPECT_EQ(code_of([&] { decode<TransferOrder>(bytes); }), ErrorCode::DecodeError);

    auto cert = encode(g.certificate());
    // Signature count far beyond the remaining input.
    Bytes huge(cert.begin(), cert.begin() + static_cast<long>(encode(g.order()).size()));
    for (int i = 0; i < 4; ++i) huge.push_back(0xff);
    EXPECT_EQ(code_of([&] { decode<Certificate>(huge); }), ErrorCode::DecodeError);
}

TEST(Envelope, VersionMismatchIsRejected)
{
    Gen g{std::mt19937_64(3)};
    auto sealed = seal(g.order());
    sealed[0] = 2;
    EXPECT_EQ(code_of([&] { open_envelope(sealed); }), ErrorCode::VersionMismatch);
    sealed[0] = 0;
    EXPECT_EQ(code_of([&] { open_envelope(sealed); }), ErrorCode::VersionMismatch);
    EXPECT_EQ(code_of([] { open_envelope(Bytes{1}); }), ErrorCode::DecodeError);
    EXPECT_EQ(code_of([] { open_envelope(Bytes{1, 99}); }), ErrorCode::DecodeError);
}

TEST(Envelope, WrongKindIsRejected)
{
    Gen g{std::mt19937_64(4)};
    auto env_bytes = seal(g.order());
    auto env = open_envelope(env_bytes);
    EXPECT_EQ(code_of([&] { open_as<Certificate>(env); }), ErrorCode::DecodeError);
}

// Requests with maximal fields at n = 10 with 32-character authority names
// fit a single datagram.
TEST(Envelope, RequestsFitOneDatagram)
{
    std::vector<KeyPair> keys;
    std::vector<AuthorityInfo> members;
    for (int i = 0; i < 10; ++i) {
        keys.push_back(KeyPair::from_label("wide:" + std::to_string(i)));
        members.push_back({std::string(31, 'n') + std::to_string(i), keys.back().public_key()});
    }
    Committee committee = Committee::from_members(members);
    auto sender = KeyPair::from_label("wide-sender");
    UserData data{};
    auto order = TransferOrder::create(sender, Recipient::fastpay(Address{}), Amount(UINT64_MAX),
                                       SequenceNumber(UINT64_MAX), data);
    std::vector<SignedTransferOrder> votes;
    for (int i = 0; i < 7; ++i) votes.push_back(SignedTransferOrder::create(order, members[i].name, keys[i]));
    auto cert = make_certificate(order, votes, committee);

    AccountInfoRequest req{Address{}, SequenceNumber(1), ReceivedPage{1, 64}, true, true};
    PrimarySynchronizationOrder sync{Address{}, Amount(1), 1, Signature{}};
    CrossShardUpdate update{0, 1, 2, cert, Signature{}};
    CrossShardAck ack{};
    for (auto size : {seal(order).size(), seal(ConfirmationOrder{cert}).size(), seal(RedeemTransaction{cert}).size(),
                      seal(sync).size(), seal(update).size(), seal(ack).size(), seal(req).size()}) {
        EXPECT_LE(size, kMaxDatagramRequest);
    }
    for (auto kind : {MessageKind::TransferOrder, MessageKind::ConfirmationOrder,
                      MessageKind::PrimarySynchronizationOrder, MessageKind::CrossShardUpdate,
                      MessageKind::CrossShardAck, MessageKind::AccountInfoRequest}) {
        EXPECT_TRUE(is_request_kind(kind));
    }
    EXPECT_FALSE(is_request_kind(MessageKind::AccountInfoResponse));
}

TEST(TransferOrder, RejectsZeroAmountAndForgery)
{
    auto k = KeyPair::from_label("zero");
    EXPECT_EQ(code_of([&] { TransferOrder::create(k, Recipient::fastpay(Address{}), Amount(0), SequenceNumber(0)); }),
              ErrorCode::ZeroAmount);
    auto order = TransferOrder::create(k, Recipient::fastpay(Address{}), Amount(3), SequenceNumber(0));
    EXPECT_TRUE(order.has_valid_signature());
    auto other = KeyPair::from_label("other");
    auto forged = order;
    forged.sender_key = other.public_key();  // key no longer hashes to sender
    forged.signature = other.sign(forged.signing_bytes());
    EXPECT_FALSE(forged.has_valid_signature());
    auto tampered = order;
    tampered.amount = Amount(4);
    EXPECT_FALSE(tampered.has_valid_signature());
}

TEST(Certificate, ExactThreshold)
{
    Fixture fx(4);
    auto order = TransferOrder::create(KeyPair::from_label("s"), Recipient::fastpay(Address{}), Amount(1),
                                       SequenceNumber(0));
    std::vector<SignedTransferOrder> votes{fx.vote(order, 2), fx.vote(order, 0), fx.vote(order, 1)};
    auto cert = make_certificate(order, votes, fx.committee);
    ASSERT_EQ(cert.signatures.size(), 3u);
    EXPECT_EQ(cert.signatures[0].authority, "auth0");
    EXPECT_EQ(cert.signatures[2].authority, "auth2");
    EXPECT_NO_THROW(check_certificate(cert, fx.committee));
    EXPECT_EQ(cert.value(), order);
    EXPECT_EQ(cert.sender(), order.sender);
    EXPECT_EQ(cert.amount(), Amount(1));
}

TEST(Certificate, DuplicateAuthorityIsNotCounted)
{
    Fixture fx(4);
    auto order = TransferOrder::create(KeyPair::from_label("s"), Recipient::fastpay(Address{}), Amount(1),
                                       SequenceNumber(0));
    std::vector<SignedTransferOrder> votes{fx.vote(order, 0), fx.vote(order, 1), fx.vote(order, 1)};
    EXPECT_EQ(code_of([&] { make_certificate(order, votes, fx.committee); }), ErrorCode::InsufficientVotes);
}

TEST(Certificate, InvalidVoteIsRejected)
{
    Fixture fx(4);
    auto order = TransferOrder::create(KeyPair::from_label("s"), Recipient::fastpay(Address{}), Amount(1),
                                       SequenceNumber(0));
    auto bad = fx.vote(order, 2);
    bad.signature.bytes[0] ^= 1;
    std::vector<SignedTransferOrder> votes{fx.vote(order, 0), fx.vote(order, 1), bad};
    EXPECT_EQ(code_of([&] { make_certificate(order, votes, fx.committee); }), ErrorCode::InvalidVote);
    auto stranger = SignedTransferOrder::create(order, "mallory", KeyPair::from_label("m"));
    votes = {fx.vote(order, 0), fx.vote(order, 1), stranger};
    EXPECT_EQ(code_of([&] { make_certificate(order, votes, fx.committee); }), ErrorCode::InvalidVote);
}

TEST(Certificate, KeepsQuorumManyOfMoreVotes)
{
    Fixture fx(10);
    auto order = TransferOrder::create(KeyPair::from_label("s"), Recipient::fastpay(Address{}), Amount(1),
                                       SequenceNumber(0));
    std::vector<SignedTransferOrder> votes;
    for (std::size_t i = 0; i < 8; ++i) votes.push_back(fx.vote(order, i));
    auto cert = make_certificate(order, votes, fx.committee);
    EXPECT_EQ(cert.signatures.size(), 7u);
    EXPECT_NO_THROW(check_certificate(cert, fx.committee));
}

TEST(Certificate, CheckFailures)
{
    Fixture fx(4);
    auto order = TransferOrder::create(KeyPair::from_label("s"), Recipient::fastpay(Address{}), Amount(1),
                                       SequenceNumber(0));
    auto cert = fx.certify(order);

    auto flipped = cert;
    flipped.signatures[1].signature.bytes[10] ^= 0x20;
    EXPECT_EQ(code_of([&] { check_certificate(flipped, fx.committee); }), ErrorCode::BadSignature);

    auto short_cert = cert;
    short_cert.signatures.pop_back();
    EXPECT_EQ(code_of([&] { check_certificate(short_cert, fx.committee); }), ErrorCode::InsufficientQuorum);

    auto padded = short_cert;
    padded.signatures.push_back(padded.signatures.front());  // same authority twice
    EXPECT_EQ(code_of([&] { check_certificate(padded, fx.committee); }), ErrorCode::InsufficientQuorum);

    auto stranger = cert;
    stranger.signatures[0].authority = "mallory";
    EXPECT_EQ(code_of([&] { check_certificate(stranger, fx.committee); }), ErrorCode::UnknownAuthority);

    auto bad_sender = cert;
    bad_sender.order.signature.bytes[0] ^= 1;
    EXPECT_EQ(code_of([&] { check_certificate(bad_sender, fx.committee); }), ErrorCode::BadSignature);

    EXPECT_TRUE(is_valid_certificate(cert, fx.committee));
    EXPECT_FALSE(is_valid_certificate(flipped, fx.committee));
}
