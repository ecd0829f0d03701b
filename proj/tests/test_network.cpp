#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <algorithm>
#include <functional>
#include <thread>

#include <gtest/gtest.h>

#include "fastpay/bench.hpp"
#include "fastpay/client.hpp"
#include "fastpay/envelope.hpp"
#include "fastpay/network.hpp"

using namespace fastpay;

namespace fastpay {
void PrintTo(TransportKind kind, std::ostream* os)
{
    *os << transport_name(kind);
}
}  // namespace fastpay

namespace {

// Authorities x shards of ShardServers on loopback, each on its own thread.
// `running` picks which authorities are started; the others stay silent.
class Cluster {
public:
    Cluster(std::size_t authorities, std::uint32_t shards, std::vector<bool> running = {})
        : ledger_key_(KeyPair::from_label("net-ledger"))
    {
        if (running.empty()) running.assign(authorities, true);
        auto ports = free_ports(authorities * shards);
        std::vector<AuthorityInfo> members;
        for (std::size_t i = 0; i < authorities; ++i) {
            keys_.push_back(KeyPair::from_label("net-auth:" + std::to_string(i)));
            members.push_back({"auth" + std::to_string(i), keys_.back().public_key()});
        }
        config_.emplace(CommitteeConfig{Committee::from_members(members), ledger_key_.public_key(), shards, {}});
        std::size_t next = 0;
        for (std::size_t a = 0; a < authorities; ++a) {
            std::vector<ShardEndpoint> row;
            for (ShardId s = 0; s < shards; ++s) row.push_back({"auth" + std::to_string(a), s, "127.0.0.1", ports[next++]});
            config_->endpoints.push_back(row);
        }
        ledger_ = std::make_unique<PrimaryLedger>(config_->committee, shards, ledger_key_);
        for (std::size_t a = 0; a < authorities; ++a) {
            if (!running[a]) continue;
            for (ShardId s = 0; s < shards; ++s) {
                AuthorityState state("auth" + std::to_string(a), keys_[a], config_->committee, ledger_key_.public_key(),
                                     s, shards);
                servers_.push_back(std::make_unique<ShardServer>(*config_, std::move(state), 20ms));
                servers_.back()->bind();
            }
        }
        for (auto& s : servers_) threads_.emplace_back([srv = s.get()] { srv->run(); });
    }

    ~Cluster() { stop(); }

    void stop()
    {
        for (auto& s : servers_) s->stop();
        for (auto& t : threads_) t.join();
        threads_.clear();
    }

    const CommitteeConfig& config() const { return *config_; }
    PrimaryLedger& ledger() { return *ledger_; }
    const std::vector<std::unique_ptr<ShardServer>>& servers() const { return servers_; }

private:
    KeyPair ledger_key_;
    std::vector<KeyPair> keys_;
    std::optional<CommitteeConfig> config_;
    std::unique_ptr<PrimaryLedger> ledger_;
    std::vector<std::unique_ptr<ShardServer>> servers_;
    std::vector<std::thread> threads_;
};

std::optional<Bytes> exchange(NetTransport& net, std::size_t authority, const Address& route, Bytes envelope,
                              Duration timeout = 500ms)
{
    std::optional<Bytes> reply;
    bool done = false;
    net.send_request(authority, route, std::move(envelope), timeout, [&](std::optional<Bytes> r) {
        reply = std::move(r);
        done = true;
    });
    net.run_until([&] { return done; });
    return reply;
}

RetryPolicy fast_policy()
{
    RetryPolicy p;
    p.request_timeout = 200ms;
    p.budget = 1500ms;
    return p;
}

}  // namespace

TEST(Framing, SplitAndJoinedFeeds)
{
    Bytes a{1, 2, 3};
    Bytes b(300, 7);
    auto fa = frame(a);
    auto fb = frame(b);
    EXPECT_EQ(fa, (Bytes{3, 0, 0, 0, 1, 2, 3}));
    Bytes stream = fa;
    stream.insert(stream.end(), fb.begin(), fb.end());
    FrameReader reader;
    for (auto byte : stream) reader.feed(std::span(&byte, 1));
    EXPECT_EQ(reader.next(), a);
    EXPECT_EQ(reader.next(), b);
    EXPECT_FALSE(reader.next());

    FrameReader big;
    Bytes huge_header{0xff, 0xff, 0xff, 0x7f};
    big.feed(huge_header);
    try {
        big.next();
        FAIL();
    } catch (const FastPayError& e) {
        EXPECT_EQ(e.code(), ErrorCode::DecodeError);
    }
}

TEST(CommitteeConfigFile, JsonRoundTrip)
{
    Cluster c(4, 2, {false, false, false, false});
    auto back = CommitteeConfig::from_json(c.config().to_json());
    EXPECT_EQ(back.to_json(), c.config().to_json());
    EXPECT_EQ(back.endpoint(2, 1).port, c.config().endpoint(2, 1).port);
    EXPECT_EQ(back.authority_index("auth3"), 3u);
    EXPECT_EQ(transport_from_name("tcp"), TransportKind::Stream);
    EXPECT_EQ(transport_name(TransportKind::Datagram), "udp");
}

class Transports : public ::testing::TestWithParam<TransportKind> {};

TEST_P(Transports, TransferOrderGetsVoteAndRetryGetsIdenticalReply)
{
    Cluster c(4, 1);
    auto alice = KeyPair::from_label("net-alice");
    auto me = address_of(alice.public_key());
    NetTransport net(c.config(), GetParam());
    // Funding first, then a transfer order.
    c.ledger().deposit(me, Amount(10));
    auto funded = c.ledger().fund(me, me, Amount(10)).second;
    ASSERT_TRUE(exchange(net, 0, me, seal(funded)));

    auto order = TransferOrder::create(alice, Recipient::fastpay(Address{}), Amount(3), SequenceNumber(0));
    auto first = exchange(net, 0, me, seal(order));
    auto again = exchange(net, 0, me, seal(order));
    ASSERT_TRUE(first && again);
    EXPECT_EQ(*first, *again);
    auto env = open_envelope(*first);
    ASSERT_EQ(env.kind, MessageKind::SignedTransferOrder);
    auto vote = open_as<SignedTransferOrder>(env);
    EXPECT_EQ(vote.order, order);
    EXPECT_NO_THROW(vote.check(c.config().committee));

    auto unknown = TransferOrder::create(KeyPair::from_label("net-nobody"), Recipient::fastpay(Address{}), Amount(1),
                                         SequenceNumber(0));
    auto err = exchange(net, 0, unknown.sender, seal(unknown));
    ASSERT_TRUE(err);
    EXPECT_EQ(open_as<ErrorReply>(open_envelope(*err)).code, ErrorCode::UnknownSender);
}

INSTANTIATE_TEST_SUITE_P(UdpAndTcp, Transports, ::testing::Values(TransportKind::Datagram, TransportKind::Stream),
                         [](const auto& info) { return transport_name(info.param); });

TEST(ShardServerWire, ForeignVersionAndGarbageDropped)
{
    Cluster c(1, 1);
    NetTransport net(c.config());
    AccountInfoRequest req;
    auto env = seal(req);
    env[0] = 2;
    EXPECT_FALSE(exchange(net, 0, Address{}, env, 200ms));
    EXPECT_FALSE(exchange(net, 0, Address{}, Bytes{1, 8, 0xde, 0xad}, 200ms));
    // The server is still alive and answers a valid request.
    auto ok = exchange(net, 0, Address{}, seal(req));
    ASSERT_TRUE(ok);
    EXPECT_EQ(open_as<ErrorReply>(open_envelope(*ok)).code, ErrorCode::UnknownAccount);
}

TEST(BroadcastAndCollect, AllReplyReturnsAtQuorum)
{
    Cluster c(4, 1);
    NetTransport net(c.config());
    auto replies = sync_wait(net, broadcast_and_collect(
                                      net, Address{}, seal(AccountInfoRequest{}),
                                      [](const auto& r) {
                                          return std::count_if(r.begin(), r.end(), [](const auto& x) {
                                                     return x.has_value();
                                                 }) >= 3;
                                      },
                                      fast_policy()));
    ASSERT_EQ(replies.size(), 4u);
    EXPECT_GE(std::count_if(replies.begin(), replies.end(), [](const auto& x) { return x.has_value(); }), 3);
}

TEST(BroadcastAndCollect, FSilentStillReachesQuorum)
{
    Cluster c(4, 1, {true, false, true, true});
    NetTransport net(c.config());
    auto replies = sync_wait(net, broadcast_and_collect(
                                      net, Address{}, seal(AccountInfoRequest{}),
                                      [](const auto& r) {
                                          return std::count_if(r.begin(), r.end(), [](const auto& x) {
                                                     return x.has_value();
                                                 }) >= 3;
                                      },
                                      fast_policy()));
    EXPECT_FALSE(replies[1]);
    EXPECT_TRUE(replies[0] && replies[2] && replies[3]);
}

TEST(BroadcastAndCollect, AllSilentIsQuorumUnreachable)
{
    Cluster c(4, 1, {false, false, false, false});
    NetTransport net(c.config());
    auto start = net.now();
    try {
        sync_wait(net, broadcast_and_collect(
                           net, Address{}, seal(AccountInfoRequest{}), [](const auto&) { return false; },
                           fast_policy()));
        FAIL();
    } catch (const FastPayError& e) {
        EXPECT_EQ(e.code(), ErrorCode::QuorumUnreachable);
        EXPECT_NE(std::string(e.what()).find("authority 3"), std::string::npos) << e.what();
    }
    EXPECT_LT(net.now() - start, 10s);
}

// A transfer between accounts on different shards settles over real sockets:
// the recipient shard of every authority is credited exactly once.
TEST(CrossShardOverSockets, RecipientCreditedOnce)
{
    Cluster c(4, 2);
    auto find = [](const std::string& prefix, ShardId shard) {
        for (int i = 0;; ++i) {
            auto k = KeyPair::from_label(prefix + std::to_string(i));
            if (shard_of(address_of(k.public_key()), 2) == shard) return k;
        }
    };
    auto alice = find("net-x", 0);
    auto bob = find("net-y", 1);
    auto payer = address_of(KeyPair::from_label("net-payer").public_key());
    c.ledger().deposit(payer, Amount(100));
    c.ledger().fund(payer, address_of(alice.public_key()), Amount(20));

    NetTransport net(c.config());
    Client client(ClientState::create(alice, c.config().committee), net, &c.ledger(), fast_policy());
    sync_wait(net, client.sync_account());
    for (int i = 0; i < 3; ++i) {
        sync_wait(net, client.transfer(Recipient::fastpay(address_of(bob.public_key())), Amount(2)));
    }
    // Let the outboxes drain.
    for (int i = 0; i < 200; ++i) {
        std::size_t pending = 0;
        for (const auto& s : c.servers()) pending += s->pending_cross_shard();
        if (pending == 0) break;
        std::this_thread::sleep_for(10ms);
    }
    std::this_thread::sleep_for(100ms);
    c.stop();
    std::size_t credited = 0;
    for (const auto& s : c.servers()) {
        if (s->state().shard_id() != 1) continue;
        const auto* acc = s->state().find_account(address_of(bob.public_key()));
        if (!acc) continue;
        ++credited;
        EXPECT_EQ(acc->balance, Balance(6));
        EXPECT_EQ(acc->received.size(), 3u);
    }
    EXPECT_GE(credited, 3u);
}
