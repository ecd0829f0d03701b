#include "fastpay/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <deque>
#include <thread>
#include <unordered_map>

#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "fastpay/audit.hpp"
#include "fastpay/envelope.hpp"

namespace fastpay {

namespace {

using Clock = std::chrono::steady_clock;

std::atomic<ShardServer*> g_server{nullptr};

extern "C" void stop_on_signal(int)
{
    if (auto* server = g_server.load()) server->stop();
}

struct ChildReport {
    std::uint64_t violations = ~0ull;
    std::uint64_t handled = 0;
};

// Shard processes forked for one benchmark. Anything still running when the
// group goes away is killed.
class ShardProcesses {
public:
    ShardProcesses() = default;
    ShardProcesses(const ShardProcesses&) = delete;
    ShardProcesses& operator=(const ShardProcesses&) = delete;
    ~ShardProcesses()
    {
        for (auto& c : children_) {
            ::kill(c.pid, SIGKILL);
            ::waitpid(c.pid, nullptr, 0);
            ::close(c.report_fd);
        }
    }

    // The child builds its state, binds, signals readiness with one byte,
    // serves until SIGTERM and then writes its audit result.
    void start(const CommitteeConfig& config, const std::function<AuthorityState()>& make_state,
               const FundingSource& primary)
    {
        int ready[2];
        int report[2];
        ensure(::pipe(ready) == 0 && ::pipe(report) == 0, ErrorCode::ConfigError, "pipe failed");
        pid_t pid = ::fork();
        ensure(pid >= 0, ErrorCode::ConfigError, fmt::format("fork: {}", std::strerror(errno)));
        if (pid == 0) {
            ::close(ready[0]);
            ::close(report[0]);
            ChildReport result;
            try {
                struct sigaction sa {};
                sa.sa_handler = stop_on_signal;
                ::sigaction(SIGTERM, &sa, nullptr);
                ShardServer server(config, make_state());
                server.bind();
                g_server.store(&server);
                char one = 1;
                [[maybe_unused]] auto w = ::write(ready[1], &one, 1);
                server.run();
                g_server.store(nullptr);
                auto audit = audit_authority(server.state(), primary);
                result = {audit.violations.size(), server.requests_handled()};
            } catch (...) {
            }
            [[maybe_unused]] auto w = ::write(report[1], &result, sizeof result);
            ::_exit(0);
        }
        ::close(ready[1]);
        ::close(report[1]);
        children_.push_back({pid, report[0]});
        char byte = 0;
        auto n = ::read(ready[0], &byte, 1);
        ::close(ready[0]);
        ensure(n == 1, ErrorCode::ConfigError, "shard process failed to start");
    }

    // SIGTERM everything and collect the audit results.
    std::vector<ChildReport> stop()
    {
        for (auto& c : children_) ::kill(c.pid, SIGTERM);
        std::vector<ChildReport> reports;
        for (auto& c : children_) {
            ChildReport r;
            pollfd p{c.report_fd, POLLIN, 0};
            if (::poll(&p, 1, 30000) > 0) {
                if (::read(c.report_fd, &r, sizeof r) != sizeof r) r = ChildReport{};
            }
            ::kill(c.pid, SIGKILL);
            ::waitpid(c.pid, nullptr, 0);
            ::close(c.report_fd);
            reports.push_back(r);
        }
        children_.clear();
        return reports;
    }

private:
    struct Child {
        pid_t pid;
        int report_fd;
    };
    std::vector<Child> children_;
};

std::string authority_name(std::size_t i)
{
    return fmt::format("auth{}", i);
}

KeyPair bench_authority_key(std::size_t i)
{
    return KeyPair::from_label(fmt::format("bench-authority:{}", i));
}

CommitteeConfig local_config(std::size_t authorities, std::uint32_t shards, const PublicKey& primary_key,
                             const std::vector<std::uint16_t>& ports)
{
    std::vector<AuthorityInfo> members;
    for (std::size_t i = 0; i < authorities; ++i) {
        members.push_back({authority_name(i), bench_authority_key(i).public_key()});
    }
    CommitteeConfig config{Committee::from_members(std::move(members)), primary_key, shards, {}};
    std::size_t next = 0;
    for (std::size_t a = 0; a < authorities; ++a) {
        std::vector<ShardEndpoint> row;
        for (ShardId s = 0; s < shards; ++s) {
            row.push_back({authority_name(a), s, "127.0.0.1", ports.at(next++)});
        }
        config.endpoints.push_back(std::move(row));
    }
    return config;
}

// Replays pre-encoded requests to the shards of one authority over a single
// UDP socket or one TCP connection per shard.
class Driver {
public:
    Driver(const CommitteeConfig& config, TransportKind kind) : config_(config), kind_(kind)
    {
        if (kind_ == TransportKind::Datagram) {
            udp_ = udp_socket();
            int size = 8 << 20;
            setsockopt(udp_.fd(), SOL_SOCKET, SO_RCVBUF, &size, sizeof size);
            setsockopt(udp_.fd(), SOL_SOCKET, SO_SNDBUF, &size, sizeof size);
            for (ShardId s = 0; s < config_.shards; ++s) {
                const auto& ep = config_.endpoint(0, s);
                targets_.push_back(resolve_endpoint(ep.host, ep.port));
            }
            return;
        }
        for (ShardId s = 0; s < config_.shards; ++s) {
            const auto& ep = config_.endpoint(0, s);
            auto addr = resolve_endpoint(ep.host, ep.port);
            Stream stream;
            stream.socket = Socket(::socket(AF_INET, SOCK_STREAM, 0));
            ensure(stream.socket.valid() &&
                       ::connect(stream.socket.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0,
                   ErrorCode::ConfigError, fmt::format("connect to shard {}: {}", s, std::strerror(errno)));
            int one = 1;
            setsockopt(stream.socket.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            set_nonblocking(stream.socket.fd());
            streams_.push_back(std::move(stream));
        }
    }

    void send(ShardId shard, const Bytes& envelope)
    {
        if (kind_ == TransportKind::Datagram) {
            ::sendto(udp_.fd(), envelope.data(), envelope.size(), 0,
                     reinterpret_cast<const sockaddr*>(&targets_[shard]), sizeof targets_[shard]);
            return;
        }
        auto& s = streams_[shard];
        auto framed = frame(envelope);
        s.outgoing.insert(s.outgoing.end(), framed.begin(), framed.end());
        flush(s);
    }

    void receive(Duration wait, const std::function<void(std::span<const std::uint8_t>)>& on_reply)
    {
        std::vector<pollfd> fds;
        if (kind_ == TransportKind::Datagram) {
            fds.push_back({udp_.fd(), POLLIN, 0});
        } else {
            for (auto& s : streams_) {
                short events = POLLIN;
                if (!s.outgoing.empty()) events |= POLLOUT;
                fds.push_back({s.socket.fd(), events, 0});
            }
        }
        auto ms = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(wait).count());
        if (::poll(fds.data(), fds.size(), ms) <= 0) return;
        if (kind_ == TransportKind::Datagram) {
            for (;;) {
                auto n = ::recv(udp_.fd(), buffer_.data(), buffer_.size(), MSG_DONTWAIT);
                if (n < 0) return;
                on_reply(std::span(buffer_.data(), static_cast<std::size_t>(n)));
            }
        }
        for (std::size_t i = 0; i < streams_.size(); ++i) {
            auto& s = streams_[i];
            if (fds[i].revents & POLLOUT) flush(s);
            if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            for (;;) {
                auto n = ::recv(s.socket.fd(), buffer_.data(), buffer_.size(), 0);
                if (n > 0) {
                    s.reader.feed(std::span(buffer_.data(), static_cast<std::size_t>(n)));
                    continue;
                }
                ensure(n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK), ErrorCode::ConfigError,
                       "shard closed the bench connection");
                break;
            }
            while (auto reply = s.reader.next()) on_reply(*reply);
        }
    }

private:
    struct Stream {
        Socket socket;
        FrameReader reader;
        Bytes outgoing;
    };

    static void flush(Stream& s)
    {
        while (!s.outgoing.empty()) {
            auto n = ::send(s.socket.fd(), s.outgoing.data(), s.outgoing.size(), MSG_NOSIGNAL);
            if (n <= 0) return;
            s.outgoing.erase(s.outgoing.begin(), s.outgoing.begin() + n);
        }
    }

    const CommitteeConfig& config_;
    TransportKind kind_;
    Socket udp_;
    std::vector<sockaddr_in> targets_;
    std::vector<Stream> streams_;
    std::vector<std::uint8_t> buffer_ = std::vector<std::uint8_t>(1 << 16);
};

struct Workload {
    std::vector<Bytes> orders;         // TransferOrder envelopes
    std::vector<Bytes> confirmations;  // ConfirmationOrder envelopes
    std::vector<ShardId> shard;        // shard of the sender
    std::unordered_map<Address, std::size_t, AddressHash> index;
};

struct PhaseCounters {
    std::uint64_t errors = 0;
    std::uint64_t retransmissions = 0;
};

// Keeps at most `in_flight` requests outstanding; a reply is matched to its
// request by the sender address it carries.
double replay(Driver& driver, const Workload& w, const std::vector<Bytes>& requests, std::size_t in_flight,
              Duration retransmit_after, PhaseCounters& counters)
{
    enum : std::uint8_t { Idle, Outstanding, Done };
    const std::size_t n = requests.size();
    std::vector<std::uint8_t> status(n, Idle);
    std::vector<Clock::time_point> sent_at(n);
    std::vector<std::uint32_t> attempts(n, 0);
    std::deque<std::size_t> queue;
    std::size_t next = 0;
    std::size_t done = 0;
    std::size_t outstanding = 0;

    auto complete = [&](std::size_t i) {
        if (status[i] != Outstanding) return;
        status[i] = Done;
        ++done;
        --outstanding;
    };
    auto on_reply = [&](std::span<const std::uint8_t> bytes) {
        std::optional<Address> account;
        try {
            auto env = open_envelope(bytes);
            switch (env.kind) {
            case MessageKind::SignedTransferOrder:
                account = open_as<SignedTransferOrder>(env).order.sender;
                break;
            case MessageKind::AccountInfoResponse:
                account = open_as<AccountInfoResponse>(env).account;
                break;
            default:
                ++counters.errors;
                return;
            }
        } catch (const FastPayError&) {
            ++counters.errors;
            return;
        }
        auto it = w.index.find(*account);
        if (it != w.index.end()) complete(it->second);
    };

    auto start = Clock::now();
    auto last_progress = start;
    while (done < n) {
        while (outstanding < in_flight && next < n) {
            driver.send(w.shard[next], requests[next]);
            status[next] = Outstanding;
            sent_at[next] = Clock::now();
            queue.push_back(next);
            ++outstanding;
            ++next;
        }
        auto before = done;
        driver.receive(1ms, on_reply);
        auto now = Clock::now();
        if (done != before) last_progress = now;
        // A full window draining at the observed service rate is not loss.
        Duration mean_gap = done ? Duration(now - start) / static_cast<long>(done) : retransmit_after;
        auto timeout = std::max<Duration>(retransmit_after, 2 * mean_gap * outstanding);
        ensure(now - last_progress < 30s, ErrorCode::QuorumUnreachable,
               fmt::format("benchmark stalled with {} of {} requests answered", done, n));

        while (!queue.empty()) {
            auto i = queue.front();
            if (status[i] == Done) {
                queue.pop_front();
                continue;
            }
            if (now - sent_at[i] < timeout) break;
            queue.pop_front();
            if (++attempts[i] > 20) {
                // Consistently rejected; error replies carry no account.
                complete(i);
                continue;
            }
            driver.send(w.shard[i], requests[i]);
            sent_at[i] = now;
            queue.push_back(i);
            ++counters.retransmissions;
        }
    }
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::vector<std::uint16_t> free_ports(std::size_t count)
{
    std::vector<Socket> held;
    std::vector<std::uint16_t> ports;
    while (ports.size() < count) {
        auto udp = udp_socket();
        auto addr = resolve_endpoint("127.0.0.1", 0);
        ensure(::bind(udp.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0, ErrorCode::ConfigError,
               "cannot bind an ephemeral port");
        socklen_t len = sizeof addr;
        getsockname(udp.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
        Socket tcp(::socket(AF_INET, SOCK_STREAM, 0));
        int one = 1;
        setsockopt(tcp.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(tcp.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) continue;
        ports.push_back(ntohs(addr.sin_port));
        held.push_back(std::move(udp));
        held.push_back(std::move(tcp));
    }
    return ports;
}

ThroughputResult bench_throughput(const ThroughputConfig& config)
{
    ensure(config.in_flight >= 1 && config.transactions >= config.in_flight, ErrorCode::ConfigError,
           "need in_flight >= 1 and transactions >= in_flight");
    ensure(config.shards >= 1, ErrorCode::ConfigError, "need at least one shard");
    const std::size_t authorities = 3 * config.faults + 1;
    const std::size_t n = config.transactions;

    auto ledger_key = KeyPair::from_label("bench-ledger");
    auto ports = free_ports(authorities * config.shards);
    auto net = local_config(authorities, config.shards, ledger_key.public_key(), ports);
    const auto& committee = net.committee;
    PrimaryLedger ledger(committee, config.shards, ledger_key);
    auto faucet = address_of(KeyPair::from_label("bench-faucet").public_key());
    ledger.deposit(faucet, Amount(n * 10));

    std::vector<KeyPair> signers;
    for (std::size_t i = 0; i < committee.quorum_threshold(); ++i) signers.push_back(bench_authority_key(i));

    // Pre-generation: every account is funded, then sends one unit to its
    // successor. Certificates are signed directly by a quorum of keys.
    Workload w;
    std::vector<KeyPair> accounts;
    accounts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        accounts.push_back(KeyPair::from_label(fmt::format("bench-account:{}", i)));
        auto address = address_of(accounts.back().public_key());
        w.index.emplace(address, i);
        w.shard.push_back(shard_of(address, config.shards));
        ledger.fund(faucet, address, Amount(10));
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto recipient = address_of(accounts[(i + 1) % n].public_key());
        auto order = TransferOrder::create(accounts[i], Recipient::fastpay(recipient), Amount(1), SequenceNumber(0));
        Certificate certificate{order, {}};
        auto message = order.signing_bytes();
        for (std::size_t a = 0; a < signers.size(); ++a) {
            certificate.signatures.push_back({authority_name(a), signers[a].sign(message)});
        }
        std::sort(certificate.signatures.begin(), certificate.signatures.end(),
                  [](const auto& x, const auto& y) { return x.authority < y.authority; });
        w.orders.push_back(seal(order));
        w.confirmations.push_back(seal(ConfirmationOrder{std::move(certificate)}));
    }

    ShardProcesses processes;
    for (ShardId s = 0; s < config.shards; ++s) {
        auto make_state = [&, s] {
            AuthorityState state(authority_name(0), bench_authority_key(0), committee, ledger.public_key(), s,
                                 config.shards);
            for (const auto& sync : ledger.shard_stream(s)) state.handle_primary_synchronization_order(sync);
            return state;
        };
        processes.start(net, make_state, ledger);
    }

    ThroughputResult result;
    Driver driver(net, config.transport);
    PhaseCounters counters;
    for (auto phase : {"transfer-orders", "confirmation-orders"}) {
        const auto& requests = std::string_view(phase) == "transfer-orders" ? w.orders : w.confirmations;
        auto seconds = replay(driver, w, requests, config.in_flight, config.retransmit_after, counters);
        result.rows.push_back({config.shards, phase, config.in_flight, n, seconds,
                               seconds > 0 ? static_cast<double>(n) / seconds : 0.0});
    }
    // Let cross-shard credits settle before the shards audit themselves.
    std::this_thread::sleep_for(config.shards > 1 ? 300ms : 10ms);
    for (const auto& r : processes.stop()) result.audit_violations += r.violations;
    result.errors = counters.errors;
    result.retransmissions = counters.retransmissions;
    return result;
}

std::vector<LatencyRow> bench_latency(const LatencyConfig& config)
{
    ensure(config.authorities >= 4 && (config.authorities - 1) % 3 == 0, ErrorCode::ConfigError,
           "authorities must be 3f+1 with f >= 1");
    const std::size_t f = (config.authorities - 1) / 3;
    ensure(config.fail_count <= f, ErrorCode::ConfigError, "fail_count exceeds f");
    ensure(config.transfers > config.warmup, ErrorCode::ConfigError, "need more transfers than warmup rounds");

    auto ledger_key = KeyPair::from_label("bench-ledger");
    auto ports = free_ports(config.authorities);
    auto net = local_config(config.authorities, 1, ledger_key.public_key(), ports);
    PrimaryLedger ledger(net.committee, 1, ledger_key);
    auto faucet = address_of(KeyPair::from_label("bench-faucet").public_key());
    auto sender = KeyPair::from_label("bench-latency-sender");
    auto recipient = address_of(KeyPair::from_label("bench-latency-recipient").public_key());
    ledger.deposit(faucet, Amount(1'000'000));
    ledger.fund(faucet, address_of(sender.public_key()), Amount(1'000'000));

    // The stopped authorities are the last ones: they are never started.
    ShardProcesses processes;
    for (std::size_t a = 0; a + config.fail_count < config.authorities; ++a) {
        auto make_state = [&, a] {
            AuthorityState state(authority_name(a), bench_authority_key(a), net.committee, ledger.public_key());
            for (const auto& sync : ledger.shard_stream(0)) state.handle_primary_synchronization_order(sync);
            return state;
        };
        processes.start(net, make_state, ledger);
    }

    NetTransport transport(net, config.transport);
    RetryPolicy policy;
    policy.background_confirmations = false;
    policy.request_timeout = 200ms;
    Client client(ClientState::create(sender, net.committee), transport, &ledger, policy);
    client.set_wait_for_all_votes(config.wait_for_all_votes);

    std::vector<double> certificate_ms;
    std::vector<double> confirmation_ms;
    for (std::size_t i = 0; i < config.transfers; ++i) {
        auto task = client.transfer(Recipient::fastpay(recipient), Amount(1));
        sync_wait(transport, std::move(task));
        if (i < config.warmup) continue;
        certificate_ms.push_back(std::chrono::duration<double, std::milli>(client.last_certificate_latency()).count());
        confirmation_ms.push_back(
            std::chrono::duration<double, std::milli>(client.last_confirmation_latency()).count());
    }
    auto reports = processes.stop();
    for (const auto& r : reports) {
        ensure(r.violations == 0, ErrorCode::ConfigError,
               fmt::format("authority audit after the latency bench reported {} violations", r.violations));
    }

    std::vector<LatencyRow> rows;
    for (auto& [phase, samples] :
         {std::pair{"certificate", &certificate_ms}, std::pair{"confirmation", &confirmation_ms}}) {
        rows.push_back({config.authorities, config.fail_count, phase, median(*samples), percentile(*samples, 0.9),
                        samples->size()});
    }
    return rows;
}

double certificate_check_seconds(std::size_t authorities, std::size_t iterations)
{
    std::vector<AuthorityInfo> members;
    std::vector<KeyPair> keys;
    for (std::size_t i = 0; i < authorities; ++i) {
        keys.push_back(bench_authority_key(i));
        members.push_back({authority_name(i), keys.back().public_key()});
    }
    auto committee = Committee::from_members(std::move(members));
    auto sender = KeyPair::from_label("bench-check-sender");
    auto order = TransferOrder::create(sender, Recipient::fastpay(address_of(keys[0].public_key())), Amount(5),
                                       SequenceNumber(0));
    std::vector<SignedTransferOrder> votes;
    for (std::size_t i = 0; i < committee.quorum_threshold(); ++i) {
        votes.push_back(SignedTransferOrder::create(order, authority_name(i), keys[i]));
    }
    auto certificate = make_certificate(order, votes, committee);

    iterations = std::max<std::size_t>(iterations, 1);
    auto start = Clock::now();
    for (std::size_t i = 0; i < iterations; ++i) check_certificate(certificate, committee);
    return std::chrono::duration<double>(Clock::now() - start).count() / static_cast<double>(iterations);
}

double median(std::vector<double> values)
{
    return percentile(std::move(values), 0.5);
}

// Nearest-rank on the sorted samples; the median of an even count averages
// the two middle values.
double percentile(std::vector<double> values, double p)
{
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    if (p == 0.5) {
        auto mid = values.size() / 2;
        return values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2;
    }
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

std::string throughput_csv(const std::vector<ThroughputRow>& rows, bool header)
{
    std::string out = header ? "shards,phase,in_flight,transactions,seconds,tx_per_sec\n" : "";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{},{:.6f},{:.1f}\n", r.shards, r.phase, r.in_flight, r.transactions, r.seconds,
                           r.tx_per_sec);
    }
    return out;
}

std::string latency_csv(const std::vector<LatencyRow>& rows, bool header)
{
    std::string out = header ? "authorities,fail_count,phase,median_ms,p90_ms,samples\n" : "";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{:.3f},{:.3f},{}\n", r.authorities, r.fail_count, r.phase, r.median_ms, r.p90_ms,
                           r.samples);
    }
    return out;
}

nlohmann::json throughput_json(const std::vector<ThroughputRow>& rows)
{
    auto out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"shards", r.shards},
                       {"phase", r.phase},
                       {"in_flight", r.in_flight},
                       {"transactions", r.transactions},
                       {"seconds", r.seconds},
                       {"tx_per_sec", r.tx_per_sec}});
    }
    return out;
}

nlohmann::json latency_json(const std::vector<LatencyRow>& rows)
{
    auto out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"authorities", r.authorities},
                       {"fail_count", r.fail_count},
                       {"phase", r.phase},
                       {"median_ms", r.median_ms},
                       {"p90_ms", r.p90_ms},
                       {"samples", r.samples}});
    }
    return out;
}

}  // namespace fastpay
