#include "fastpay/network.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fmt/format.h>

#include "fastpay/envelope.hpp"
#include "fastpay/json_io.hpp"

namespace fastpay {

TransportKind transport_from_name(std::string_view name)
{
    if (name == "udp") return TransportKind::Datagram;
    if (name == "tcp") return TransportKind::Stream;
    fail(ErrorCode::ConfigError, fmt::format("unknown transport '{}' (udp|tcp)", name));
}

std::string transport_name(TransportKind kind)
{
    return kind == TransportKind::Datagram ? "udp" : "tcp";
}

// --- configuration -------------------------------------------------------------

const ShardEndpoint& CommitteeConfig::endpoint(std::size_t authority, ShardId shard) const
{
    ensure(authority < endpoints.size() && shard < endpoints[authority].size(), ErrorCode::ConfigError,
           "no endpoint for this authority shard");
    return endpoints[authority][shard];
}

std::size_t CommitteeConfig::authority_index(std::string_view name) const
{
    auto index = committee.index_of(name);
    ensure(index.has_value(), ErrorCode::UnknownAuthority, fmt::format("unknown authority '{}'", name));
    return *index;
}

nlohmann::json CommitteeConfig::to_json() const
{
    nlohmann::json j;
    j["f"] = committee.faults_tolerated();
    j["primary_key"] = primary_key.hex();
    j["shards"] = shards;
    j["authorities"] = nlohmann::json::array();
    for (std::size_t i = 0; i < committee.size(); ++i) {
        const auto& info = committee.authorities()[i];
        nlohmann::json a{{"name", info.name}, {"public_key", info.key.hex()}, {"shards", nlohmann::json::array()}};
        for (const auto& ep : endpoints[i]) {
            a["shards"].push_back({{"shard_id", ep.shard_id}, {"host", ep.host}, {"port", ep.port}});
        }
        j["authorities"].push_back(a);
    }
    return j;
}

CommitteeConfig CommitteeConfig::from_json(const nlohmann::json& j)
{
    try {
        auto committee = committee_from_json(j);
        auto primary_key = PublicKey::from_hex(j.at("primary_key").get<std::string>());
        std::vector<std::vector<ShardEndpoint>> endpoints;
        std::optional<std::size_t> shard_count;
        for (const auto& a : j.at("authorities")) {
            auto name = a.at("name").get<std::string>();
            std::vector<ShardEndpoint> shards;
            for (const auto& s : a.at("shards")) {
                shards.push_back({name, s.at("shard_id").get<ShardId>(), s.at("host").get<std::string>(),
                                  s.at("port").get<std::uint16_t>()});
            }
            ensure(!shards.empty(), ErrorCode::ConfigError, fmt::format("authority {} lists no shards", name));
            ensure(!shard_count || *shard_count == shards.size(), ErrorCode::ConfigError,
                   "all authorities must run the same number of shards");
            shard_count = shards.size();
            std::sort(shards.begin(), shards.end(),
                      [](const ShardEndpoint& x, const ShardEndpoint& y) { return x.shard_id < y.shard_id; });
            for (std::size_t k = 0; k < shards.size(); ++k) {
                ensure(shards[k].shard_id == k, ErrorCode::ConfigError,
                       fmt::format("authority {} must list shards 0..{} exactly once", name, shards.size() - 1));
            }
            endpoints.push_back(std::move(shards));
        }
        auto shards = static_cast<std::uint32_t>(*shard_count);
        if (j.contains("shards")) {
            ensure(j.at("shards").get<std::uint32_t>() == shards, ErrorCode::ConfigError,
                   "'shards' disagrees with the endpoint lists");
        }
        return CommitteeConfig{std::move(committee), primary_key, shards, std::move(endpoints)};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, fmt::format("malformed committee config: {}", e.what()));
    }
}

CommitteeConfig CommitteeConfig::load(const std::string& path)
{
    return from_json(read_json_file(path));
}

sockaddr_in resolve_endpoint(const std::string& host, std::uint16_t port)
{
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0") {
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        return addr;
    }
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* result = nullptr;
    int rc = getaddrinfo(host.c_str(), nullptr, &hints, &result);
    ensure(rc == 0 && result != nullptr, ErrorCode::ConfigError,
           fmt::format("cannot resolve host '{}': {}", host, gai_strerror(rc)));
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(result->ai_addr)->sin_addr;
    freeaddrinfo(result);
    return addr;
}

sockaddr_in bind_address(const ShardEndpoint& endpoint)
{
    const char* override_host = std::getenv("FASTPAY_BIND_ADDRESS");
    return resolve_endpoint(override_host ? std::string(override_host) : endpoint.host, endpoint.port);
}

// --- sockets -------------------------------------------------------------------

Socket& Socket::operator=(Socket&& other) noexcept
{
    if (this != &other) {
        reset();
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

Socket::~Socket()
{
    reset();
}

void Socket::reset()
{
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void set_nonblocking(int fd)
{
    int flags = fcntl(fd, F_GETFL, 0);
    ensure(flags >= 0 && fcntl(fd, F_SETFL, flags | O_NONBLOCK) == 0, ErrorCode::ConfigError,
           fmt::format("fcntl: {}", std::strerror(errno)));
}

Socket udp_socket()
{
    Socket s(::socket(AF_INET, SOCK_DGRAM, 0));
    ensure(s.valid(), ErrorCode::ConfigError, fmt::format("socket: {}", std::strerror(errno)));
    set_nonblocking(s.fd());
    return s;
}

Bytes frame(std::span<const std::uint8_t> envelope)
{
    ensure(envelope.size() <= kMaxFrame, ErrorCode::DecodeError, "frame too large");
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(envelope.size()));
    w.raw(envelope);
    return w.take();
}

void FrameReader::feed(std::span<const std::uint8_t> bytes)
{
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Bytes> FrameReader::next()
{
    if (buffer_.size() < 4) return std::nullopt;
    std::uint32_t length = buffer_[0] | (buffer_[1] << 8) | (buffer_[2] << 16) | (std::uint32_t{buffer_[3]} << 24);
    ensure(length <= kMaxFrame, ErrorCode::DecodeError, "frame too large");
    if (buffer_.size() < 4 + std::size_t{length}) return std::nullopt;
    Bytes out(buffer_.begin() + 4, buffer_.begin() + 4 + length);
    buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + length);
    return out;
}

namespace {

Duration steady_now()
{
    return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now().time_since_epoch());
}

constexpr std::size_t kMaxDatagram = 65507;

}  // namespace

// --- shard server --------------------------------------------------------------

ShardServer::ShardServer(CommitteeConfig config, AuthorityState state, Duration retransmit_interval)
    : config_(std::move(config)), state_(std::move(state)), authority_(config_.authority_index(state_.name())),
      retransmit_interval_(retransmit_interval), buffer_(kMaxDatagram)
{
    ensure(state_.number_of_shards() == config_.shards, ErrorCode::ConfigError,
           "authority state and config disagree on the shard count");
    ensure(state_.shard_id() < config_.shards, ErrorCode::ConfigError, "shard id out of range");
}

ShardServer::~ShardServer() = default;

void ShardServer::bind()
{
    const auto& ep = config_.endpoint(authority_, state_.shard_id());
    auto addr = bind_address(ep);

    udp_ = udp_socket();
    int size = 8 << 20;
    setsockopt(udp_.fd(), SOL_SOCKET, SO_RCVBUF, &size, sizeof size);
    setsockopt(udp_.fd(), SOL_SOCKET, SO_SNDBUF, &size, sizeof size);
    ensure(::bind(udp_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0, ErrorCode::ConfigError,
           fmt::format("bind udp {}:{}: {}", ep.host, ep.port, std::strerror(errno)));
    socklen_t len = sizeof addr;
    getsockname(udp_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);

    listener_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    ensure(listener_.valid(), ErrorCode::ConfigError, fmt::format("socket: {}", std::strerror(errno)));
    int one = 1;
    setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    ensure(::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0, ErrorCode::ConfigError,
           fmt::format("bind tcp {}:{}: {}", ep.host, port_, std::strerror(errno)));
    ensure(::listen(listener_.fd(), 128) == 0, ErrorCode::ConfigError,
           fmt::format("listen: {}", std::strerror(errno)));
    set_nonblocking(listener_.fd());
}

void ShardServer::run()
{
    if (!udp_.valid()) bind();
    auto last_retransmit = steady_now();
    std::vector<pollfd> fds;
    while (!stop_.load()) {
        fds.clear();
        fds.push_back({udp_.fd(), POLLIN, 0});
        fds.push_back({listener_.fd(), POLLIN, 0});
        for (const auto& c : connections_) {
            short events = POLLIN;
            if (!c->outgoing.empty()) events |= POLLOUT;
            fds.push_back({c->socket.fd(), events, 0});
        }
        int ready = ::poll(fds.data(), fds.size(), 10);
        if (ready < 0 && errno != EINTR) {
            fail(ErrorCode::ConfigError, fmt::format("poll: {}", std::strerror(errno)));
        }
        if (ready > 0) {
            if (fds[0].revents & POLLIN) handle_datagram();
            if (fds[1].revents & POLLIN) handle_accept();
            std::vector<std::unique_ptr<Connection>> alive;
            auto polled = fds.size() - 2;
            for (std::size_t i = 0; i < polled; ++i) {
                auto revents = fds[2 + i].revents;
                bool keep = true;
                if (revents & (POLLIN | POLLOUT | POLLERR | POLLHUP)) keep = handle_connection(*connections_[i]);
                if (keep) alive.push_back(std::move(connections_[i]));
            }
            // Connections accepted during this round were appended after the
            // polled ones.
            for (std::size_t i = polled; i < connections_.size(); ++i) {
                alive.push_back(std::move(connections_[i]));
            }
            connections_ = std::move(alive);
        }
        auto now = steady_now();
        if (now - last_retransmit >= retransmit_interval_) {
            last_retransmit = now;
            retransmit();
        }
    }
}

std::optional<Bytes> ShardServer::handle_envelope(std::span<const std::uint8_t> envelope)
{
    auto result = dispatch_envelope(state_, envelope);
    ++handled_;
    if (result.outgoing) {
        outbox_.push(*result.outgoing);
        for (const auto& u : outbox_.due(steady_now(), retransmit_interval_)) send_update(u);
    }
    if (result.acknowledged) outbox_.acknowledge(*result.acknowledged);
    return std::move(result.reply);
}

void ShardServer::handle_datagram()
{
    for (int batch = 0; batch < 512; ++batch) {
        sockaddr_in from{};
        socklen_t from_len = sizeof from;
        auto n = ::recvfrom(udp_.fd(), buffer_.data(), buffer_.size(), 0, reinterpret_cast<sockaddr*>(&from),
                            &from_len);
        if (n < 0) return;  // EAGAIN or a transient error
        auto reply = handle_envelope(std::span(buffer_.data(), static_cast<std::size_t>(n)));
        if (!reply) continue;
        if (reply->size() > kMaxDatagram) {
            reply = error_envelope(FastPayError(ErrorCode::InvalidRequest,
                                                "response exceeds one datagram; use the stream transport"));
        }
        ::sendto(udp_.fd(), reply->data(), reply->size(), 0, reinterpret_cast<sockaddr*>(&from), from_len);
    }
}

void ShardServer::handle_accept()
{
    for (;;) {
        int fd = ::accept(listener_.fd(), nullptr, nullptr);
        if (fd < 0) return;
        set_nonblocking(fd);
        int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        auto c = std::make_unique<Connection>();
        c->socket = Socket(fd);
        connections_.push_back(std::move(c));
    }
}

bool ShardServer::handle_connection(Connection& c)
{
    std::uint8_t chunk[16384];
    for (;;) {
        auto n = ::recv(c.socket.fd(), chunk, sizeof chunk, 0);
        if (n == 0) return false;
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK) break;
            return false;
        }
        c.reader.feed(std::span(chunk, static_cast<std::size_t>(n)));
    }
    try {
        while (auto envelope = c.reader.next()) {
            if (auto reply = handle_envelope(*envelope)) {
                auto framed = frame(*reply);
                c.outgoing.insert(c.outgoing.end(), framed.begin(), framed.end());
            }
        }
    } catch (const FastPayError&) {
        return false;
    }
    while (!c.outgoing.empty()) {
        auto n = ::send(c.socket.fd(), c.outgoing.data(), c.outgoing.size(), MSG_NOSIGNAL);
        if (n < 0) return errno == EAGAIN || errno == EWOULDBLOCK;
        c.outgoing.erase(c.outgoing.begin(), c.outgoing.begin() + n);
    }
    return true;
}

void ShardServer::send_update(const CrossShardUpdate& update)
{
    const auto& ep = config_.endpoint(authority_, update.shard_id);
    auto addr = resolve_endpoint(ep.host, ep.port);
    auto envelope = seal(update);
    ::sendto(udp_.fd(), envelope.data(), envelope.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
}

void ShardServer::retransmit()
{
    for (const auto& u : outbox_.due(steady_now(), retransmit_interval_)) send_update(u);
}

// --- client transport ------------------------------------------------------------

NetTransport::NetTransport(CommitteeConfig config, TransportKind kind)
    : config_(std::move(config)), kind_(kind), epoch_(std::chrono::steady_clock::now())
{
}

NetTransport::~NetTransport() = default;

Duration NetTransport::now() const
{
    return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - epoch_);
}

void NetTransport::post_after(Duration delay, std::function<void()> fn)
{
    timers_.push(Timer{now() + std::max(delay, Duration::zero()), next_order_++, std::move(fn)});
}

void NetTransport::send_request(std::size_t authority, const Address& route, Bytes envelope, Duration timeout,
                                std::function<void(std::optional<Bytes>)> on_reply)
{
    const auto& ep = config_.endpoint(authority, shard_of(route, config_.shards));
    auto addr = resolve_endpoint(ep.host, ep.port);
    auto id = next_id_++;
    Pending p;
    p.kind = kind_;
    p.callback = std::move(on_reply);
    if (kind_ == TransportKind::Datagram) {
        p.socket = udp_socket();
        if (::connect(p.socket.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
            ::send(p.socket.fd(), envelope.data(), envelope.size(), 0) < 0) {
            p.socket.reset();  // the timeout reports the failure
        }
    } else {
        p.socket = Socket(::socket(AF_INET, SOCK_STREAM, 0));
        if (p.socket.valid()) {
            set_nonblocking(p.socket.fd());
            int one = 1;
            setsockopt(p.socket.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            int rc = ::connect(p.socket.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
            if (rc != 0 && errno != EINPROGRESS) p.socket.reset();
            p.connected = rc == 0;
            p.outgoing = frame(envelope);
        }
    }
    pending_.emplace(id, std::move(p));
    post_after(timeout, [this, id] { finish(id, std::nullopt); });
}

void NetTransport::finish(std::uint64_t id, std::optional<Bytes> reply)
{
    auto it = pending_.find(id);
    if (it == pending_.end()) return;
    auto callback = std::move(it->second.callback);
    pending_.erase(it);
    callback(std::move(reply));
}

void NetTransport::poll_once(Duration wait)
{
    std::vector<pollfd> fds;
    std::vector<std::uint64_t> ids;
    for (auto& [id, p] : pending_) {
        if (!p.socket.valid()) continue;
        short events = POLLIN;
        if (p.kind == TransportKind::Stream && (!p.connected || !p.outgoing.empty())) events |= POLLOUT;
        fds.push_back({p.socket.fd(), events, 0});
        ids.push_back(id);
    }
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(wait).count();
    if (wait > Duration::zero() && ms == 0) ms = 1;
    int ready = ::poll(fds.data(), fds.size(), static_cast<int>(ms));
    if (ready <= 0) return;

    std::vector<std::pair<std::uint64_t, Bytes>> completed;
    std::vector<std::uint8_t> buffer(kMaxDatagram);
    for (std::size_t i = 0; i < fds.size(); ++i) {
        if (!fds[i].revents) continue;
        auto& p = pending_.at(ids[i]);
        if (p.kind == TransportKind::Datagram) {
            auto n = ::recv(p.socket.fd(), buffer.data(), buffer.size(), 0);
            if (n >= 0) {
                completed.emplace_back(ids[i], Bytes(buffer.begin(), buffer.begin() + n));
            } else if (errno != EAGAIN && errno != EWOULDBLOCK) {
                p.socket.reset();  // e.g. port unreachable; wait for the timeout
            }
            continue;
        }
        if (!p.connected && (fds[i].revents & (POLLOUT | POLLERR | POLLHUP))) {
            int err = 0;
            socklen_t len = sizeof err;
            getsockopt(p.socket.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
            if (err != 0) {
                p.socket.reset();
                continue;
            }
            p.connected = true;
        }
        if (p.connected && !p.outgoing.empty()) {
            auto n = ::send(p.socket.fd(), p.outgoing.data(), p.outgoing.size(), MSG_NOSIGNAL);
            if (n > 0) p.outgoing.erase(p.outgoing.begin(), p.outgoing.begin() + n);
            if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
                p.socket.reset();
                continue;
            }
        }
        if (fds[i].revents & (POLLIN | POLLHUP)) {
            for (;;) {
                auto n = ::recv(p.socket.fd(), buffer.data(), buffer.size(), 0);
                if (n > 0) {
                    p.reader.feed(std::span(buffer.data(), static_cast<std::size_t>(n)));
                    continue;
                }
                if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) p.socket.reset();
                break;
            }
            try {
                if (auto reply = p.reader.next()) completed.emplace_back(ids[i], std::move(*reply));
            } catch (const FastPayError&) {
                p.socket.reset();
            }
        }
    }
    for (auto& [id, reply] : completed) finish(id, std::move(reply));
}

bool NetTransport::run_until(const std::function<bool()>& done)
{
    for (;;) {
        while (!timers_.empty() && timers_.top().at <= now()) {
            auto fn = std::move(const_cast<Timer&>(timers_.top()).fn);
            timers_.pop();
            fn();
            if (done()) return true;
        }
        if (done()) return true;
        if (timers_.empty() && pending_.empty()) return false;
        auto wait = timers_.empty() ? Duration(100ms) : std::max(Duration::zero(), timers_.top().at - now());
        poll_once(std::min(wait, Duration(100ms)));
        if (done()) return true;
    }
}

// --- broadcast -------------------------------------------------------------------

namespace {

Task<Bytes> exchange(AuthorityTransport& transport, std::size_t authority, Address route, Bytes envelope,
                     RetryPolicy policy, std::shared_ptr<CancelToken> cancel)
{
    auto& executor = transport.executor();
    auto deadline = executor.now() + policy.budget;
    auto backoff = policy.initial_backoff;
    for (;;) {
        if (cancel->cancelled) fail(ErrorCode::QuorumUnreachable, "cancelled");
        auto reply = co_await request(transport, authority, route, envelope, policy.request_timeout);
        if (reply) co_return std::move(*reply);
        if (executor.now() + backoff >= deadline) fail(ErrorCode::QuorumUnreachable, "no answer within the budget");
        co_await sleep_for(executor, backoff);
        backoff = std::min(backoff * 2, policy.max_backoff);
    }
}

}  // namespace

Task<std::vector<std::optional<Bytes>>> broadcast_and_collect(
    AuthorityTransport& transport, Address route, Bytes envelope,
    std::function<bool(const std::vector<std::optional<Bytes>>&)> enough, RetryPolicy policy)
{
    auto cancel = std::make_shared<CancelToken>();
    std::vector<Task<Bytes>> exchanges;
    for (std::size_t i = 0; i < transport.authority_count(); ++i) {
        exchanges.push_back(exchange(transport, i, route, envelope, policy, cancel));
    }
    std::function<bool(const Gathered<Bytes>&)> stop = [enough](const Gathered<Bytes>& g) {
        return enough(g.results);
    };
    auto awaiter = gather_until<Bytes>(transport.executor(), std::move(exchanges), std::move(stop), cancel, true);
    auto gathered = co_await std::move(awaiter);
    if (!enough(gathered.results)) {
        std::string diagnostics;
        for (std::size_t i = 0; i < gathered.errors.size(); ++i) {
            if (!gathered.errors[i]) continue;
            try {
                std::rethrow_exception(gathered.errors[i]);
            } catch (const std::exception& e) {
                diagnostics += fmt::format("authority {}: {}; ", i, e.what());
            }
        }
        fail(ErrorCode::QuorumUnreachable, fmt::format("broadcast did not collect enough replies: {}", diagnostics));
    }
    co_return std::move(gathered.results);
}

}  // namespace fastpay
