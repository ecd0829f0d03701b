#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include <netinet/in.h>

#include "json.hpp"

#include "fastpay/authority.hpp"
#include "fastpay/client.hpp"
#include "fastpay/dispatch.hpp"
#include "fastpay/runtime.hpp"

namespace fastpay {

enum class TransportKind { Datagram, Stream };

TransportKind transport_from_name(std::string_view name);  // "udp" | "tcp"
std::string transport_name(TransportKind kind);

struct ShardEndpoint {
    std::string authority;
    ShardId shard_id = 0;
    std::string host;
    std::uint16_t port = 0;  // UDP and TCP share the number
};

// Deployment description: the committee, the Primary ledger key and where
// every shard of every authority listens.
struct CommitteeConfig {
    Committee committee;
    PublicKey primary_key;
    std::uint32_t shards = 1;
    std::vector<std::vector<ShardEndpoint>> endpoints;  // [authority][shard]

    const ShardEndpoint& endpoint(std::size_t authority, ShardId shard) const;
    std::size_t authority_index(std::string_view name) const;

    nlohmann::json to_json() const;
    static CommitteeConfig from_json(const nlohmann::json& j);
    static CommitteeConfig load(const std::string& path);
};

// Resolves host:port; FASTPAY_BIND_ADDRESS overrides the host for binds.
sockaddr_in resolve_endpoint(const std::string& host, std::uint16_t port);
sockaddr_in bind_address(const ShardEndpoint& endpoint);

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket();

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void reset();

private:
    int fd_ = -1;
};

Socket udp_socket();
void set_nonblocking(int fd);

// Stream framing: 4-byte little-endian length, then the envelope.
inline constexpr std::size_t kMaxFrame = 16u << 20;
Bytes frame(std::span<const std::uint8_t> envelope);

// Accumulates stream bytes and yields complete frames.
class FrameReader {
public:
    void feed(std::span<const std::uint8_t> bytes);
    std::optional<Bytes> next();  // throws DecodeError on oversized frames

private:
    Bytes buffer_;
};

// One shard of one authority behind a UDP socket and a TCP listener on the
// same port. Single-threaded: run() owns the state machine until stop().
class ShardServer {
public:
    ShardServer(CommitteeConfig config, AuthorityState state, Duration retransmit_interval = 50ms);
    ~ShardServer();

    // Binds both sockets. Port 0 in the endpoint picks ephemeral ports.
    void bind();
    void run();
    void stop() noexcept { stop_.store(true); }

    std::uint16_t port() const noexcept { return port_; }
    const AuthorityState& state() const noexcept { return state_; }
    AuthorityState& state() noexcept { return state_; }
    std::uint64_t requests_handled() const noexcept { return handled_; }
    std::size_t pending_cross_shard() const noexcept { return outbox_.pending(); }

private:
    struct Connection {
        Socket socket;
        FrameReader reader;
        Bytes outgoing;
    };

    void handle_datagram();
    void handle_accept();
    bool handle_connection(Connection& c);  // false when closed
    std::optional<Bytes> handle_envelope(std::span<const std::uint8_t> envelope);
    void send_update(const CrossShardUpdate& update);
    void retransmit();

    CommitteeConfig config_;
    AuthorityState state_;
    std::size_t authority_;
    Duration retransmit_interval_;
    Socket udp_;
    Socket listener_;
    std::uint16_t port_ = 0;
    std::vector<std::unique_ptr<Connection>> connections_;
    CrossShardOutbox outbox_;
    std::atomic<bool> stop_{false};
    std::uint64_t handled_ = 0;
    Bytes buffer_;
};

// Client-side event loop over poll(2): timers plus one socket per
// outstanding request (UDP datagram, or TCP connection with framing).
class NetTransport final : public Executor, public AuthorityTransport {
public:
    explicit NetTransport(CommitteeConfig config, TransportKind kind = TransportKind::Datagram);
    ~NetTransport() override;

    Duration now() const override;
    void post_after(Duration delay, std::function<void()> fn) override;
    bool run_until(const std::function<bool()>& done) override;

    Executor& executor() override { return *this; }
    std::size_t authority_count() const override { return config_.committee.size(); }
    void send_request(std::size_t authority, const Address& route, Bytes envelope, Duration timeout,
                      std::function<void(std::optional<Bytes>)> on_reply) override;

    const CommitteeConfig& config() const noexcept { return config_; }
    // Per-request transport override (large responses travel over TCP).
    void set_kind(TransportKind kind) { kind_ = kind; }

private:
    struct Pending {
        Socket socket;
        TransportKind kind;
        FrameReader reader;
        Bytes outgoing;  // unsent part of the TCP frame
        bool connected = true;
        std::function<void(std::optional<Bytes>)> callback;
    };
    struct Timer {
        Duration at;
        std::uint64_t order;
        std::function<void()> fn;
        bool operator>(const Timer& o) const { return at != o.at ? at > o.at : order > o.order; }
    };

    void finish(std::uint64_t id, std::optional<Bytes> reply);
    void poll_once(Duration wait);

    CommitteeConfig config_;
    TransportKind kind_;
    std::chrono::steady_clock::time_point epoch_;
    std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
    std::uint64_t next_order_ = 0;
    std::uint64_t next_id_ = 0;
    std::map<std::uint64_t, Pending> pending_;
};

// Sends one envelope to the responsible shard of every authority in
// parallel, retrying each independently, and returns once `enough` holds
// over the replies gathered so far. Throws QuorumUnreachable with
// per-authority diagnostics when every exchange ended without `enough`.
Task<std::vector<std::optional<Bytes>>> broadcast_and_collect(
    AuthorityTransport& transport, Address route, Bytes envelope,
    std::function<bool(const std::vector<std::optional<Bytes>>&)> enough, RetryPolicy policy = {});

}  // namespace fastpay
