// Operator CLI: deployment files, shard servers, wallet flows, audits and
// benchmarks. Run `fastpay --help` for the subcommands.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "fastpay/audit.hpp"
#include "fastpay/bench.hpp"
#include "fastpay/client.hpp"
#include "fastpay/envelope.hpp"
#include "fastpay/json_io.hpp"
#include "fastpay/network.hpp"
#include "fastpay/primary_ledger.hpp"

using namespace fastpay;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum class Format { Text, Json, Csv };

struct Output {
    Format format = Format::Text;
    std::string path;

    void emit(const std::string& text) const
    {
        if (path.empty()) {
            std::cout << text;
            if (!text.empty() && text.back() != '\n') std::cout << '\n';
            return;
        }
        std::ofstream out(path);
        ensure(static_cast<bool>(out), ErrorCode::ConfigError, fmt::format("cannot write {}", path));
        out << text;
    }
    void emit(const json& j) const { emit(j.dump(2) + "\n"); }
};

Format format_from_name(const std::string& name)
{
    if (name == "text") return Format::Text;
    if (name == "json") return Format::Json;
    if (name == "csv") return Format::Csv;
    fail(ErrorCode::ConfigError, fmt::format("unknown format '{}'", name));
}

// --- files -----------------------------------------------------------------------

json key_file(const std::string& name, const KeyPair& key)
{
    json j{{"seed", to_hex(key.seed())},
           {"public_key", key.public_key().hex()},
           {"address", address_of(key.public_key()).hex()}};
    if (!name.empty()) j["name"] = name;
    return j;
}

KeyPair load_key(const std::string& path)
{
    auto j = read_json_file(path);
    return KeyPair::from_seed(array_from_hex<KeyPair::kSeedSize>(j.at("seed").get<std::string>()));
}

struct Wallet {
    std::string path;
    ClientState state;

    static Wallet load(const std::string& path) { return {path, ClientState::from_json(read_json_file(path))}; }
    void save(const ClientState& s) const { write_json_file(path, s.to_json()); }
};

Certificate load_certificate(const std::string& path)
{
    auto j = read_json_file(path);
    return decode_hex<Certificate>(j.at("certificate").get<std::string>());
}

json certificate_json(const Certificate& c)
{
    json signers = json::array();
    for (const auto& s : c.signatures) signers.push_back(s.authority);
    return {{"sender", c.sender().hex()},
            {"recipient", c.recipient().address.hex()},
            {"recipient_kind", c.recipient().is_primary() ? "primary" : "fastpay"},
            {"amount", c.amount().units()},
            {"sequence", c.sequence().value()},
            {"signers", signers},
            {"certificate", encode_hex(c)}};
}

json response_json(const AccountInfoResponse& r)
{
    json j{{"account", r.account.hex()},
           {"owner_key", r.owner_key ? json(r.owner_key->hex()) : json()},
           {"balance", r.balance.units()},
           {"next_sequence", r.next_sequence.value()},
           {"pending", r.pending ? json(encode_hex(*r.pending)) : json()},
           {"last_transaction", r.last_transaction},
           {"received_count", r.received_count}};
    if (r.requested_certificate) j["requested_certificate"] = certificate_json(*r.requested_certificate);
    auto list = [](const std::vector<Certificate>& certs) {
        json out = json::array();
        for (const auto& c : certs) out.push_back(certificate_json(c));
        return out;
    };
    j["received"] = list(r.received);
    j["confirmed"] = list(r.confirmed);
    json syncs = json::array();
    for (const auto& s : r.synchronized) {
        syncs.push_back({{"amount", s.amount.units()}, {"transaction_index", s.transaction_index}});
    }
    j["synchronized"] = syncs;
    return j;
}

Address parse_address(const std::string& text)
{
    try {
        return Address::from_hex(text);
    } catch (const FastPayError&) {
        fail(ErrorCode::ConfigError, fmt::format("'{}' is not a 64-digit hex address", text));
    }
}

std::vector<std::size_t> parse_list(const std::string& text)
{
    std::vector<std::size_t> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            out.push_back(std::stoul(item));
        } catch (const std::exception&) {
            fail(ErrorCode::ConfigError, fmt::format("'{}' is not a number list", text));
        }
    }
    ensure(!out.empty(), ErrorCode::ConfigError, "empty list");
    return out;
}

// --- network helpers ---------------------------------------------------------------

RetryPolicy cli_policy()
{
    RetryPolicy p;
    p.request_timeout = 500ms;
    p.budget = 10s;
    p.background_confirmations = false;
    return p;
}

std::size_t count_if_ok(const std::vector<std::optional<Bytes>>& replies,
                        const std::function<bool(const Envelope&)>& accept)
{
    std::size_t n = 0;
    for (const auto& r : replies) {
        if (!r) continue;
        try {
            if (accept(open_envelope(*r))) ++n;
        } catch (const FastPayError&) {
        }
    }
    return n;
}

// Pushes the funding stream of the recipient's shard to every authority; a
// quorum must accept each order.
void relay_funding(NetTransport& transport, const PrimaryLedger& ledger, const Address& recipient)
{
    auto quorum = transport.config().committee.quorum_threshold();
    auto shard = shard_of(recipient, ledger.number_of_shards());
    for (const auto& sync : ledger.shard_stream(shard)) {
        auto accepted = [](const Envelope& e) { return e.kind != MessageKind::ErrorReply; };
        std::function<bool(const std::vector<std::optional<Bytes>>&)> enough =
            [quorum, accepted](const std::vector<std::optional<Bytes>>& replies) {
                return count_if_ok(replies, accepted) >= quorum;
            };
        auto task = broadcast_and_collect(transport, sync.recipient, seal(sync), enough, cli_policy());
        sync_wait(transport, std::move(task));
    }
}

// One AccountInfoRequest per authority; unreachable authorities yield nullopt.
std::vector<std::optional<AccountInfoResponse>> query_all(NetTransport& transport, const AccountInfoRequest& request,
                                                          bool require_quorum)
{
    auto quorum = transport.config().committee.quorum_threshold();
    auto size = transport.config().committee.size();
    std::function<bool(const std::vector<std::optional<Bytes>>&)> enough =
        [size](const std::vector<std::optional<Bytes>>& replies) {
            return static_cast<std::size_t>(std::count_if(replies.begin(), replies.end(),
                                                          [](const auto& r) { return r.has_value(); })) == size;
        };
    auto policy = cli_policy();
    policy.budget = 3s;
    std::vector<std::optional<Bytes>> replies;
    try {
        auto task = broadcast_and_collect(transport, request.account, seal(request), enough, policy);
        replies = sync_wait(transport, std::move(task));
    } catch (const FastPayError& e) {
        if (e.code() != ErrorCode::QuorumUnreachable) throw;
        // Some authorities never answered; fall back to one pass per authority.
        replies.assign(size, std::nullopt);
        for (std::size_t i = 0; i < size; ++i) {
            std::optional<Bytes> reply;
            bool done = false;
            transport.send_request(i, request.account, seal(request), 1s, [&](std::optional<Bytes> r) {
                reply = std::move(r);
                done = true;
            });
            transport.run_until([&] { return done; });
            replies[i] = std::move(reply);
        }
    }
    std::vector<std::optional<AccountInfoResponse>> out(size);
    std::size_t answered = 0;
    for (std::size_t i = 0; i < size; ++i) {
        if (!replies[i]) continue;
        try {
            auto env = open_envelope(*replies[i]);
            if (env.kind == MessageKind::AccountInfoResponse) {
                out[i] = open_as<AccountInfoResponse>(env);
                ++answered;
            } else if (env.kind == MessageKind::ErrorReply) {
                auto err = open_as<ErrorReply>(env);
                if (err.code == ErrorCode::UnknownAccount) {
                    out[i] = AccountInfoResponse{};
                    out[i]->account = request.account;
                    ++answered;
                }
            }
        } catch (const FastPayError&) {
        }
    }
    if (require_quorum) {
        ensure(answered >= quorum, ErrorCode::QuorumUnreachable,
               fmt::format("{} of {} authorities answered, quorum is {}", answered, size, quorum));
    }
    return out;
}

// The full offchain state of an account as one authority reports it,
// following the received-certificate pages.
std::optional<AccountOffchainState> fetch_account(NetTransport& transport, std::size_t authority,
                                                  const Address& account)
{
    AccountOffchainState state;
    std::uint64_t start = 0;
    for (;;) {
        AccountInfoRequest request;
        request.account = account;
        request.include_confirmed = start == 0;
        request.include_synchronized = start == 0;
        request.received_page = ReceivedPage{start, AuthorityState::kMaxReceivedPage};
        std::optional<Bytes> reply;
        bool done = false;
        transport.send_request(authority, account, seal(request), 2s, [&](std::optional<Bytes> r) {
            reply = std::move(r);
            done = true;
        });
        transport.run_until([&] { return done; });
        if (!reply) return std::nullopt;
        auto env = open_envelope(*reply);
        if (env.kind == MessageKind::ErrorReply) {
            auto err = open_as<ErrorReply>(env);
            if (err.code == ErrorCode::UnknownAccount) return AccountOffchainState{};
            fail(err.code, err.message, err.detail);
        }
        auto r = open_as<AccountInfoResponse>(env);
        if (start == 0) {
            state.owner_key = r.owner_key;
            state.balance = r.balance;
            state.next_sequence = r.next_sequence;
            state.pending = r.pending;
            state.confirmed = r.confirmed;
            state.synchronized = r.synchronized;
        }
        state.received.insert(state.received.end(), r.received.begin(), r.received.end());
        start += r.received.size();
        if (r.received.empty() || start >= r.received_count) return state;
    }
}

// --- subcommands ---------------------------------------------------------------------

int cmd_keygen(const std::string& out_path, const std::string& committee_path, const Output& out)
{
    auto key = KeyPair::generate();
    auto address = address_of(key.public_key());
    if (!committee_path.empty()) {
        auto config = CommitteeConfig::load(committee_path);
        write_json_file(out_path, ClientState::create(key, config.committee).to_json());
    } else {
        write_json_file(out_path, key_file("", key));
    }
    if (out.format == Format::Json) {
        out.emit(json{{"address", address.hex()}, {"public_key", key.public_key().hex()}, {"file", out_path}});
    } else {
        out.emit(address.hex());
    }
    return 0;
}

int cmd_committee(std::size_t authorities, std::uint32_t shards, const std::string& host, std::uint16_t base_port,
                  const std::string& out_dir, const Output& out)
{
    ensure(authorities >= 1 && (authorities - 1) % 3 == 0, ErrorCode::ConfigError,
           "the number of authorities must be 3f+1");
    ensure(shards >= 1, ErrorCode::ConfigError, "need at least one shard");
    fs::create_directories(out_dir);

    std::vector<AuthorityInfo> members;
    std::vector<KeyPair> keys;
    for (std::size_t i = 0; i < authorities; ++i) {
        keys.push_back(KeyPair::generate());
        members.push_back({fmt::format("auth{}", i), keys.back().public_key()});
    }
    auto ledger_key = KeyPair::generate();
    CommitteeConfig config{Committee::from_members(members), ledger_key.public_key(), shards, {}};
    for (std::size_t a = 0; a < authorities; ++a) {
        std::vector<ShardEndpoint> row;
        for (ShardId s = 0; s < shards; ++s) {
            auto port = static_cast<std::uint16_t>(base_port + a * shards + s);
            row.push_back({members[a].name, s, host, port});
        }
        config.endpoints.push_back(std::move(row));
        write_json_file((fs::path(out_dir) / fmt::format("{}.json", members[a].name)).string(),
                        key_file(members[a].name, keys[a]));
    }
    write_json_file((fs::path(out_dir) / "committee.json").string(), config.to_json());
    PrimaryLedger ledger(config.committee, shards, ledger_key);
    write_json_file((fs::path(out_dir) / "primary.json").string(), ledger.to_json());

    json files = json::array({"committee.json", "primary.json"});
    for (const auto& m : members) files.push_back(m.name + ".json");
    if (out.format == Format::Json) {
        out.emit(json{{"directory", out_dir}, {"files", files}});
    } else {
        out.emit(fmt::format("wrote committee of {} authorities x {} shards to {}", authorities, shards, out_dir));
    }
    return 0;
}

int cmd_run_shard(const std::string& committee_path, const std::string& key_path, ShardId shard)
{
    auto config = CommitteeConfig::load(committee_path);
    auto key_json = read_json_file(key_path);
    auto name = key_json.at("name").get<std::string>();
    auto key = load_key(key_path);
    const auto* member = config.committee.find(name);
    ensure(member && member->key == key.public_key(), ErrorCode::ConfigError,
           fmt::format("key file does not match committee member '{}'", name));
    AuthorityState state(name, key, config.committee, config.primary_key, shard, config.shards);
    ShardServer server(config, std::move(state));
    server.bind();
    fmt::print(stderr, "{} shard {} listening on port {}\n", name, shard, server.port());
    server.run();
    return 0;
}

int cmd_fund(const std::string& committee_path, const std::string& primary_path, const std::string& to,
             std::uint64_t amount, const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto ledger = PrimaryLedger::from_json(read_json_file(primary_path));
    ensure(ledger.public_key() == config.primary_key, ErrorCode::ConfigError,
           "primary ledger key does not match the committee file");
    auto recipient = parse_address(to);
    // The demo Primary mints into a faucet account that pays for the deposit.
    auto faucet = address_of(KeyPair::from_label("primary-faucet").public_key());
    ledger.deposit(faucet, Amount(amount));
    auto [tx, sync] = ledger.fund(faucet, recipient, Amount(amount));
    write_json_file(primary_path, ledger.to_json());

    NetTransport transport(config);
    relay_funding(transport, ledger, recipient);
    if (out.format == Format::Json) {
        out.emit(json{{"recipient", recipient.hex()},
                      {"amount", amount},
                      {"transaction_index", tx.transaction_index},
                      {"shard", tx.shard},
                      {"shard_index", tx.shard_index}});
    } else {
        out.emit(fmt::format("funded {} with {} (transaction {})", recipient.short_hex(), amount,
                             tx.transaction_index));
    }
    return 0;
}

int cmd_transfer(const std::string& committee_path, const std::string& wallet_path, const std::string& primary_path,
                 const std::string& to, bool to_primary, std::uint64_t amount, const std::string& certificate_out,
                 TransportKind kind, const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto wallet = Wallet::load(wallet_path);
    std::optional<PrimaryLedger> ledger;
    if (!primary_path.empty()) ledger = PrimaryLedger::from_json(read_json_file(primary_path));
    NetTransport transport(config, kind);
    Client client(wallet.state, transport, ledger ? &*ledger : nullptr, cli_policy());
    client.set_checkpoint([&](const ClientState& s) { wallet.save(s); });

    auto recipient = to_primary ? Recipient::primary(parse_address(to)) : Recipient::fastpay(parse_address(to));
    if (client.state().pending_order) {
        // A previous run crashed after signing; finish that order first.
        auto resumed = sync_wait(transport, client.resume_pending());
        fmt::print(stderr, "settled pending order at sequence {}\n", resumed.sequence().value());
    }
    auto task = client.transfer(recipient, Amount(amount));
    auto certificate = sync_wait(transport, std::move(task));
    wallet.save(client.state());
    auto cj = certificate_json(certificate);
    if (!certificate_out.empty()) write_json_file(certificate_out, cj);
    if (out.format == Format::Json) {
        out.emit(cj);
    } else {
        out.emit(fmt::format("certified transfer of {} from {} to {} at sequence {}", certificate.amount().units(),
                             certificate.sender().short_hex(), certificate.recipient().address.short_hex(),
                             certificate.sequence().value()));
    }
    return 0;
}

int cmd_receive(const std::string& committee_path, const std::string& wallet_path, const std::string& cert_path,
                TransportKind kind, const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto wallet = Wallet::load(wallet_path);
    auto certificate = load_certificate(cert_path);
    NetTransport transport(config, kind);
    Client client(wallet.state, transport, nullptr, cli_policy());
    client.set_checkpoint([&](const ClientState& s) { wallet.save(s); });
    sync_wait(transport, client.receive_certificate(certificate));
    wallet.save(client.state());
    if (out.format == Format::Json) {
        out.emit(json{{"received", certificate_json(certificate)}, {"spendable", client.spendable_balance().units()}});
    } else {
        out.emit(fmt::format("settled incoming transfer of {}; spendable {}", certificate.amount().units(),
                             client.spendable_balance().units()));
    }
    return 0;
}

int cmd_sync(const std::string& committee_path, const std::string& wallet_path, const std::string& primary_path,
             TransportKind kind, const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto wallet = Wallet::load(wallet_path);
    std::optional<PrimaryLedger> ledger;
    if (!primary_path.empty()) ledger = PrimaryLedger::from_json(read_json_file(primary_path));
    NetTransport transport(config, kind);
    Client client(wallet.state, transport, ledger ? &*ledger : nullptr, cli_policy());
    client.set_checkpoint([&](const ClientState& s) { wallet.save(s); });
    sync_wait(transport, client.sync_account());
    wallet.save(client.state());
    if (out.format == Format::Json) {
        out.emit(json{{"address", client.address().hex()}, {"spendable", client.spendable_balance().units()}});
    } else {
        out.emit(fmt::format("synchronised {}; spendable {}", client.address().short_hex(),
                             client.spendable_balance().units()));
    }
    return 0;
}

int cmd_balance(const std::string& committee_path, const std::string& wallet_path, const std::string& address_text,
                const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    std::optional<Wallet> wallet;
    Address address;
    if (!wallet_path.empty()) {
        wallet = Wallet::load(wallet_path);
        address = wallet->state.address;
    } else {
        ensure(!address_text.empty(), ErrorCode::ConfigError, "give --wallet or --address");
        address = parse_address(address_text);
    }
    NetTransport transport(config);
    AccountInfoRequest request;
    request.account = address;
    auto responses = query_all(transport, request, true);

    // The balance is the value reported by the largest group of authorities.
    std::map<std::int64_t, std::size_t> votes;
    json per_authority = json::object();
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const auto& name = config.committee.authorities()[i].name;
        if (!responses[i]) {
            per_authority[name] = nullptr;
            continue;
        }
        ++votes[responses[i]->balance.units()];
        per_authority[name] = responses[i]->balance.units();
    }
    auto best = std::max_element(votes.begin(), votes.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    std::optional<std::int64_t> spendable;
    if (wallet) {
        NetTransport dummy(config);
        Client client(wallet->state, dummy);
        spendable = client.spendable_balance().units();
    }
    switch (out.format) {
    case Format::Json: {
        json j{{"address", address.hex()},
               {"balance", best->first},
               {"agreeing", best->second},
               {"authorities", per_authority}};
        if (spendable) j["spendable"] = *spendable;
        out.emit(j);
        break;
    }
    case Format::Csv: {
        std::string csv = "authority,balance\n";
        for (const auto& [name, value] : per_authority.items()) {
            csv += fmt::format("{},{}\n", name, value.is_null() ? "" : value.dump());
        }
        out.emit(csv);
        break;
    }
    case Format::Text:
        out.emit(fmt::format("{}", best->first));
        break;
    }
    return 0;
}

int cmd_redeem(const std::string& committee_path, const std::string& primary_path, const std::string& cert_path,
               const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto ledger = PrimaryLedger::from_json(read_json_file(primary_path));
    ensure(ledger.committee() == config.committee, ErrorCode::ConfigError,
           "primary ledger committee does not match the committee file");
    auto certificate = load_certificate(cert_path);
    auto payout = ledger.redeem(RedeemTransaction{certificate});
    write_json_file(primary_path, ledger.to_json());
    auto beneficiary = certificate.recipient().address;
    if (out.format == Format::Json) {
        out.emit(json{{"beneficiary", beneficiary.hex()},
                      {"payout", payout.units()},
                      {"primary_balance", ledger.primary_balance(beneficiary).units()},
                      {"contract_balance", ledger.total_balance().units()}});
    } else {
        out.emit(fmt::format("paid {} to {} on the primary", payout.units(), beneficiary.short_hex()));
    }
    return 0;
}

int cmd_query_authority(const std::string& committee_path, const std::string& authority, const std::string& account,
                        std::optional<std::uint64_t> certificate_at, const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto index = config.authority_index(authority);
    NetTransport transport(config, TransportKind::Stream);
    AccountInfoRequest request;
    request.account = parse_address(account);
    request.include_confirmed = true;
    request.include_synchronized = true;
    request.received_page = ReceivedPage{0, AuthorityState::kMaxReceivedPage};
    if (certificate_at) request.certificate_query = SequenceNumber(*certificate_at);
    std::optional<Bytes> reply;
    bool done = false;
    transport.send_request(index, request.account, seal(request), 2s, [&](std::optional<Bytes> r) {
        reply = std::move(r);
        done = true;
    });
    transport.run_until([&] { return done; });
    ensure(reply.has_value(), ErrorCode::QuorumUnreachable, fmt::format("authority {} did not answer", authority));
    auto env = open_envelope(*reply);
    if (env.kind == MessageKind::ErrorReply) {
        auto err = open_as<ErrorReply>(env);
        fail(err.code, err.message, err.detail);
    }
    out.emit(response_json(open_as<AccountInfoResponse>(env)));
    return 0;
}

int cmd_audit(const std::string& committee_path, const std::string& primary_path,
              const std::vector<std::string>& extra_accounts, const Output& out)
{
    auto config = CommitteeConfig::load(committee_path);
    auto ledger = PrimaryLedger::from_json(read_json_file(primary_path));
    NetTransport transport(config, TransportKind::Stream);

    std::set<Address> accounts;
    for (const auto& f : ledger.fundings()) accounts.insert(f.recipient);
    for (const auto& a : extra_accounts) accounts.insert(parse_address(a));

    AuditReport report;
    CertificateSet certificates;
    std::set<Address> visited;
    std::vector<std::string> unreachable;
    std::vector<bool> reachable(config.committee.size(), true);
    // Follow certificates to discover every account that took part.
    while (true) {
        std::vector<Address> todo;
        for (const auto& a : accounts) {
            if (!visited.count(a)) todo.push_back(a);
        }
        if (todo.empty()) break;
        for (const auto& account : todo) {
            visited.insert(account);
            for (std::size_t i = 0; i < config.committee.size(); ++i) {
                if (!reachable[i]) continue;
                const auto& name = config.committee.authorities()[i].name;
                auto state = fetch_account(transport, i, account);
                if (!state) {
                    reachable[i] = false;
                    unreachable.push_back(name);
                    continue;
                }
                auto shard = shard_of(account, config.shards);
                report.merge(audit_account_state(fmt::format("{}/{}", name, shard), account, *state, ledger));
                for (const auto* list : {&state->confirmed, &state->received}) {
                    for (const auto& c : *list) {
                        certificates.add(c);
                        if (c.recipient().is_fastpay()) accounts.insert(c.recipient().address);
                        accounts.insert(c.sender());
                    }
                }
            }
        }
    }
    report.authorities_checked = std::count(reachable.begin(), reachable.end(), true);
    for (const auto& a : visited) report.merge(audit_account_safety(certificates.all(), ledger, a));
    report.merge(audit_solvency(certificates.all(), ledger));
    report.merge(audit_primary(ledger));
    report.merge(audit_certificate_uniqueness(certificates.all()));
    report.accounts_checked = visited.size();
    report.certificates_checked = certificates.size();

    if (out.format == Format::Json) {
        auto j = report.to_json();
        j["unreachable"] = unreachable;
        out.emit(j);
    } else {
        auto text = report.to_text();
        for (const auto& name : unreachable) text += fmt::format("authority {} unreachable, skipped\n", name);
        out.emit(text);
    }
    return report.ok() ? 0 : 3;
}

// Renders the CSV with tools/plot_bench.py. FASTPAY_PLOT_SCRIPT overrides the
// script location baked in at build time.
void plot_csv(const std::string& csv, const std::string& png)
{
    if (png.empty()) return;
    const char* env = std::getenv("FASTPAY_PLOT_SCRIPT");
    std::string script = env ? env : FASTPAY_PLOT_SCRIPT;
    auto data = std::filesystem::path(png).replace_extension(".csv");
    {
        std::ofstream f(data);
        ensure(static_cast<bool>(f), ErrorCode::ConfigError, fmt::format("cannot write {}", data.string()));
        f << csv;
    }
    auto quote = [](const std::string& x) {
        std::string q = "'";
        for (char c : x) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
        return q + "'";
    };
    auto command = fmt::format("python3 {} {} {}", quote(script), quote(data.string()), quote(png));
    ensure(std::system(command.c_str()) == 0, ErrorCode::ConfigError, fmt::format("plotting failed: {}", command));
}

int cmd_bench_throughput(const std::string& shards_list, std::size_t transactions, const std::string& in_flight_list,
                         TransportKind kind, const std::string& plot_path, const Output& out)
{
    std::vector<ThroughputRow> rows;
    std::size_t violations = 0;
    for (auto shards : parse_list(shards_list)) {
        for (auto in_flight : parse_list(in_flight_list)) {
            ThroughputConfig config;
            config.shards = static_cast<std::uint32_t>(shards);
            config.transactions = transactions;
            config.in_flight = in_flight;
            config.transport = kind;
            auto result = bench_throughput(config);
            violations += result.audit_violations;
            rows.insert(rows.end(), result.rows.begin(), result.rows.end());
            fmt::print(stderr, "shards={} in_flight={}: {} retransmissions, {} error replies, {} audit violations\n",
                       shards, in_flight, result.retransmissions, result.errors, result.audit_violations);
        }
    }
    if (out.format == Format::Json) {
        out.emit(throughput_json(rows));
    } else {
        out.emit(throughput_csv(rows));
    }
    plot_csv(throughput_csv(rows), plot_path);
    return violations == 0 ? 0 : 3;
}

int cmd_bench_latency(const std::string& authorities_list, const std::string& fail_list, std::size_t transfers,
                      bool wait_all, TransportKind kind, const std::string& plot_path, const Output& out)
{
    std::vector<LatencyRow> rows;
    for (auto n : parse_list(authorities_list)) {
        std::vector<std::size_t> fails;
        if (fail_list == "all") {
            for (std::size_t k = 0; k <= (n - 1) / 3; ++k) fails.push_back(k);
        } else {
            fails = parse_list(fail_list);
        }
        for (auto k : fails) {
            LatencyConfig config;
            config.authorities = n;
            config.fail_count = k;
            config.transfers = transfers;
            config.wait_for_all_votes = wait_all;
            config.transport = kind;
            auto r = bench_latency(config);
            rows.insert(rows.end(), r.begin(), r.end());
        }
    }
    if (out.format == Format::Json) {
        out.emit(latency_json(rows));
    } else {
        out.emit(latency_csv(rows));
    }
    plot_csv(latency_csv(rows), plot_path);
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"FastPay settlement: authorities, clients, Primary emulator and benchmarks"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string format_name = "text";
    std::string out_path;
    std::string transport_name_flag = "udp";
    app.add_option("--format", format_name, "Output format: text, json or csv")
        ->check(CLI::IsMember({"text", "json", "csv"}));
    app.add_option("--out", out_path, "Write the output to a file instead of stdout");
    app.add_option("--transport", transport_name_flag, "Client transport: udp or tcp")
        ->check(CLI::IsMember({"udp", "tcp"}));

    std::string committee_path;
    std::string wallet_path;
    std::string primary_path;

    auto* keygen = app.add_subcommand("keygen", "Generate a key pair (a wallet when --committee is given)");
    std::string key_out = "key.json";
    keygen->add_option("--key-out,-o", key_out, "Key or wallet file to write");
    keygen->add_option("--committee", committee_path, "Committee file; makes the output a wallet");

    auto* committee = app.add_subcommand("committee", "Generate a local deployment: keys, committee and primary");
    std::size_t n_authorities = 4;
    std::uint32_t n_shards = 1;
    std::string host = "127.0.0.1";
    std::uint16_t base_port = 9100;
    std::string out_dir = "deployment";
    committee->add_option("--authorities", n_authorities, "Number of authorities (3f+1)");
    committee->add_option("--shards", n_shards, "Shards per authority");
    committee->add_option("--host", host, "Host every shard listens on");
    committee->add_option("--base-port", base_port, "First port; one per shard");
    committee->add_option("--dir", out_dir, "Output directory");

    auto* run_shard = app.add_subcommand("run-shard", "Serve one shard of one authority");
    std::string key_path;
    ShardId shard_id = 0;
    run_shard->add_option("--committee", committee_path)->required();
    run_shard->add_option("--key", key_path, "Authority key file")->required();
    run_shard->add_option("--shard", shard_id, "Shard to serve");

    auto* fund = app.add_subcommand("fund", "Deposit on the Primary and relay the synchronization order");
    std::string to;
    std::uint64_t amount = 0;
    fund->add_option("--committee", committee_path)->required();
    fund->add_option("--primary", primary_path, "Primary ledger file")->required();
    fund->add_option("--to", to, "Recipient address")->required();
    fund->add_option("--amount", amount)->required();

    auto* transfer = app.add_subcommand("transfer", "Sign, certify and settle a transfer");
    bool to_primary = false;
    std::string cert_out;
    transfer->add_option("--committee", committee_path)->required();
    transfer->add_option("--wallet", wallet_path)->required();
    transfer->add_option("--primary", primary_path, "Primary ledger file (refreshes known funding)");
    transfer->add_option("--to", to, "Recipient address")->required();
    transfer->add_flag("--to-primary", to_primary, "Pay out to the recipient's Primary account");
    transfer->add_option("--amount", amount)->required();
    transfer->add_option("--certificate-out", cert_out, "Write the certificate here");

    auto* receive = app.add_subcommand("receive", "Settle an incoming certificate");
    std::string cert_path;
    receive->add_option("--committee", committee_path)->required();
    receive->add_option("--wallet", wallet_path)->required();
    receive->add_option("--certificate", cert_path)->required();

    auto* sync = app.add_subcommand("sync", "Bring every authority up to date with the account");
    sync->add_option("--committee", committee_path)->required();
    sync->add_option("--wallet", wallet_path)->required();
    sync->add_option("--primary", primary_path, "Primary ledger file");

    auto* balance = app.add_subcommand("balance", "Balance as reported by the authorities");
    std::string address_text;
    balance->add_option("--committee", committee_path)->required();
    balance->add_option("--wallet", wallet_path);
    balance->add_option("--address", address_text);

    auto* redeem = app.add_subcommand("redeem", "Redeem a Primary-recipient certificate");
    redeem->add_option("--committee", committee_path)->required();
    redeem->add_option("--primary", primary_path)->required();
    redeem->add_option("--certificate", cert_path)->required();

    auto* audit = app.add_subcommand("audit", "Check the invariants over the live authorities and the Primary");
    std::vector<std::string> audit_accounts;
    audit->add_option("--committee", committee_path)->required();
    audit->add_option("--primary", primary_path)->required();
    audit->add_option("--account", audit_accounts, "Extra accounts to check");

    auto* query = app.add_subcommand("query-authority", "Raw account info from one authority");
    std::string authority_name;
    std::string account_text;
    std::optional<std::uint64_t> certificate_at;
    query->add_option("--committee", committee_path)->required();
    query->add_option("--authority", authority_name)->required();
    query->add_option("--account", account_text)->required();
    query->add_option("--certificate-at", certificate_at, "Also fetch the certificate at this sequence");

    auto* bench_tp = app.add_subcommand("bench-throughput", "Transfer and confirmation order throughput");
    std::string shards_list = "1";
    std::size_t num_transactions = 10000;
    std::string in_flight_list = "1000";
    bench_tp->add_option("--shards", shards_list, "Comma-separated shard counts");
    bench_tp->add_option("--num-transactions", num_transactions);
    bench_tp->add_option("--in-flight", in_flight_list, "Comma-separated in-flight caps");
    std::string plot_path;
    bench_tp->add_option("--plot", plot_path, "Also render a PNG (needs python3 with pandas and matplotlib)");

    auto* bench_lat = app.add_subcommand("bench-latency", "Client-perceived latency with stopped authorities");
    std::string authorities_list = "4,10";
    std::string fail_list = "all";
    std::size_t transfers = 30;
    bool wait_all = false;
    bench_lat->add_option("--authorities", authorities_list, "Comma-separated committee sizes");
    bench_lat->add_option("--fail-count", fail_list, "Comma-separated stopped counts, or 'all' for 0..f");
    bench_lat->add_option("--transfers", transfers);
    bench_lat->add_flag("--wait-all-votes", wait_all, "Collect every live vote, not just a quorum");
    bench_lat->add_option("--plot", plot_path, "Also render a PNG (needs python3 with pandas and matplotlib)");

    CLI11_PARSE(app, argc, argv);

    Output out;
    try {
        out.format = format_from_name(format_name);
        out.path = out_path;
        auto kind = transport_from_name(transport_name_flag);
        if (*keygen) return cmd_keygen(key_out, committee_path, out);
        if (*committee) return cmd_committee(n_authorities, n_shards, host, base_port, out_dir, out);
        if (*run_shard) return cmd_run_shard(committee_path, key_path, shard_id);
        if (*fund) return cmd_fund(committee_path, primary_path, to, amount, out);
        if (*transfer) {
            return cmd_transfer(committee_path, wallet_path, primary_path, to, to_primary, amount, cert_out, kind, out);
        }
        if (*receive) return cmd_receive(committee_path, wallet_path, cert_path, kind, out);
        if (*sync) return cmd_sync(committee_path, wallet_path, primary_path, kind, out);
        if (*balance) return cmd_balance(committee_path, wallet_path, address_text, out);
        if (*redeem) return cmd_redeem(committee_path, primary_path, cert_path, out);
        if (*audit) return cmd_audit(committee_path, primary_path, audit_accounts, out);
        if (*query) return cmd_query_authority(committee_path, authority_name, account_text, certificate_at, out);
        if (*bench_tp) return cmd_bench_throughput(shards_list, num_transactions, in_flight_list, kind, plot_path, out);
        if (*bench_lat) return cmd_bench_latency(authorities_list, fail_list, transfers, wait_all, kind, plot_path, out);
    } catch (const FastPayError& e) {
        if (out.format == Format::Json) {
            std::cerr << json{{"error", error_name(e.code())}, {"detail", e.detail()}, {"message", e.what()}}.dump()
                      << "\n";
        } else {
            std::cerr << "error: " << error_name(e.code()) << ": " << e.what() << "\n";
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
