#include "fastpay/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "fastpay/envelope.hpp"
#include "fastpay/json_io.hpp"

namespace fastpay {

std::string behavior_name(Behavior behavior)
{
    switch (behavior) {
    case Behavior::Honest: return "honest";
    case Behavior::Silent: return "silent";
    case Behavior::EquivocateVotes: return "equivocate-votes";
    case Behavior::ReportZeroSequence: return "report-zero-sequence";
    case Behavior::CorruptReply: return "corrupt-reply";
    }
    return "unknown";
}

Behavior behavior_from_name(std::string_view name)
{
    for (auto b : {Behavior::Honest, Behavior::Silent, Behavior::EquivocateVotes, Behavior::ReportZeroSequence,
                   Behavior::CorruptReply}) {
        if (behavior_name(b) == name) return b;
    }
    fail(ErrorCode::ConfigError, fmt::format("unknown behavior '{}'", name));
}

// --- scripts -------------------------------------------------------------------

std::string ScriptAction::to_string() const
{
    switch (kind) {
    case Kind::Fund: return fmt::format("fund {} {}", from, amount);
    case Kind::Transfer: return fmt::format("transfer {} {} {}", from, to, amount);
    case Kind::Withdraw: return fmt::format("withdraw {} {}", from, amount);
    case Kind::Sync: return fmt::format("sync {}", from);
    }
    return {};
}

namespace {

bool valid_account_name(std::string_view name)
{
    return !name.empty() && name.size() <= 64 && std::all_of(name.begin(), name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
}

}  // namespace

std::vector<ScriptAction> parse_script(std::string_view text)
{
    std::vector<ScriptAction> script;
    std::istringstream lines{std::string(text)};
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(lines, line)) {
        ++line_number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream words(line);
        std::vector<std::string> tokens;
        for (std::string w; words >> w;) tokens.push_back(w);
        if (tokens.empty()) continue;

        auto bad = [&](std::string_view why) {
            fail(ErrorCode::ScriptError, fmt::format("line {}: {}", line_number, why), line_number);
        };
        auto account = [&](const std::string& name) {
            if (!valid_account_name(name)) bad(fmt::format("invalid account name '{}'", name));
            return name;
        };
        auto amount = [&](const std::string& s) {
            std::uint64_t v = 0;
            auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || end != s.data() + s.size()) bad(fmt::format("invalid amount '{}'", s));
            return v;
        };

        ScriptAction action;
        const auto& verb = tokens[0];
        if (verb == "fund" && tokens.size() == 3) {
            action = {ScriptAction::Kind::Fund, account(tokens[1]), {}, amount(tokens[2])};
        } else if (verb == "transfer" && tokens.size() == 4) {
            action = {ScriptAction::Kind::Transfer, account(tokens[1]), account(tokens[2]), amount(tokens[3])};
        } else if (verb == "withdraw" && tokens.size() == 3) {
            action = {ScriptAction::Kind::Withdraw, account(tokens[1]), {}, amount(tokens[2])};
        } else if (verb == "sync" && tokens.size() == 2) {
            action = {ScriptAction::Kind::Sync, account(tokens[1]), {}, 0};
        } else {
            bad(fmt::format("cannot parse '{}'", line));
        }
        script.push_back(std::move(action));
    }
    return script;
}

std::string format_script(const std::vector<ScriptAction>& script)
{
    std::string out;
    for (const auto& a : script) out += a.to_string() + "\n";
    return out;
}

ReferenceResult reference_execution(const std::vector<ScriptAction>& script)
{
    ReferenceResult result;
    auto& b = result.balances;
    for (const auto& a : script) {
        bool applied = false;
        switch (a.kind) {
        case ScriptAction::Kind::Fund:
            b[a.from];
            if (a.amount > 0) {
                b[a.from] += static_cast<std::int64_t>(a.amount);
                applied = true;
            }
            break;
        case ScriptAction::Kind::Transfer:
            b[a.from];
            b[a.to];
            if (a.amount > 0 && b[a.from] >= static_cast<std::int64_t>(a.amount)) {
                b[a.from] -= static_cast<std::int64_t>(a.amount);
                b[a.to] += static_cast<std::int64_t>(a.amount);
                applied = true;
            }
            break;
        case ScriptAction::Kind::Withdraw:
            b[a.from];
            if (a.amount > 0 && b[a.from] >= static_cast<std::int64_t>(a.amount)) {
                b[a.from] -= static_cast<std::int64_t>(a.amount);
                result.primary_payouts += a.amount;
                applied = true;
            }
            break;
        case ScriptAction::Kind::Sync:
            b[a.from];
            applied = true;
            break;
        }
        result.applied.push_back(applied);
    }
    return result;
}

std::vector<ScriptAction> random_script(std::mt19937_64& rng, std::size_t accounts, std::size_t actions,
                                        bool withdrawals)
{
    auto name = [](std::size_t i) { return fmt::format("u{}", i); };
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    std::vector<ScriptAction> script;
    for (std::size_t i = 0; i < accounts && script.size() < actions; ++i) {
        script.push_back({ScriptAction::Kind::Fund, name(i), {}, 1 + rng() % 100});
    }
    while (script.size() < actions) {
        auto roll = pick(100);
        auto from = pick(accounts);
        if (roll < 55 && accounts > 1) {
            auto to = (from + 1 + pick(accounts - 1)) % accounts;
            script.push_back({ScriptAction::Kind::Transfer, name(from), name(to), 1 + rng() % 80});
        } else if (roll < 70) {
            script.push_back({ScriptAction::Kind::Fund, name(from), {}, 1 + rng() % 50});
        } else if (roll < 85 && withdrawals) {
            script.push_back({ScriptAction::Kind::Withdraw, name(from), {}, 1 + rng() % 40});
        } else {
            script.push_back({ScriptAction::Kind::Sync, name(from), {}, 0});
        }
    }
    return script;
}

KeyPair account_key(const std::string& name)
{
    return KeyPair::from_label("account:" + name);
}

Address account_address(const std::string& name)
{
    return address_of(account_key(name).public_key());
}

nlohmann::json ExecutionTrace::to_json() const
{
    nlohmann::json j;
    j["seed"] = seed;
    j["messages"] = messages;
    j["actions"] = nlohmann::json::array();
    for (const auto& a : actions) {
        j["actions"].push_back({{"action", a.action},
                                {"outcome", a.outcome},
                                {"error", a.error},
                                {"completed_at_ns", a.completed_at.count()}});
    }
    j["certificates"] = certificates;
    j["snapshots"] = snapshots;
    j["final_balances"] = final_balances;
    j["primary_payouts"] = primary_payouts;
    j["audit_violations"] = audit_violations;
    return j;
}

// --- simulation --------------------------------------------------------------

namespace {

std::vector<KeyPair> authority_keys(std::size_t n)
{
    std::vector<KeyPair> keys;
    for (std::size_t i = 0; i < n; ++i) keys.push_back(KeyPair::from_label(fmt::format("authority:{}", i)));
    return keys;
}

Committee sim_committee(const std::vector<KeyPair>& keys, std::size_t f)
{
    std::vector<AuthorityInfo> infos;
    for (std::size_t i = 0; i < keys.size(); ++i) infos.push_back({fmt::format("auth{}", i), keys[i].public_key()});
    return Committee(std::move(infos), f);
}

struct PendingReply {
    bool done = false;
    std::function<void(std::optional<Bytes>)> callback;

    void settle(std::optional<Bytes> reply)
    {
        if (done) return;
        done = true;
        callback(std::move(reply));
    }
};

}  // namespace

Simulation::Simulation(SimConfig config, Schedule schedule)
    : config_(std::move(config)), schedule_(std::move(schedule)), rng_(schedule_.seed),
      authority_keys_(authority_keys(3 * config_.faults + 1)), committee_(sim_committee(authority_keys_, config_.faults))
{
    ensure(config_.shards >= 1, ErrorCode::ConfigError, "at least one shard per authority");
    auto ledger_key = KeyPair::from_label("primary-ledger");
    ledger_ = std::make_unique<PrimaryLedger>(committee_, config_.shards, ledger_key);
    faucet_ = address_of(KeyPair::from_label("primary-faucet").public_key());

    for (std::size_t i = 0; i < authority_keys_.size(); ++i) {
        SimAuthority a{committee_.authorities()[i].name, authority_keys_[i], {}, {}, false};
        for (ShardId s = 0; s < config_.shards; ++s) {
            a.shards.emplace_back(a.name, a.key, committee_, ledger_->public_key(), s, config_.shards);
            a.outboxes.emplace_back();
        }
        authorities_.push_back(std::move(a));
        auto it = schedule_.byzantine.find(i);
        behaviors_.push_back(it == schedule_.byzantine.end() ? Behavior::Honest : it->second);
    }
    trace_.seed = schedule_.seed;
}

Simulation::~Simulation() = default;

void Simulation::post_after(Duration delay, std::function<void()> fn)
{
    events_.push(Event{now_ + std::max(delay, Duration::zero()), next_order_++, std::move(fn)});
}

bool Simulation::run_until(const std::function<bool()>& done)
{
    while (!done()) {
        if (events_.empty()) return false;
        auto event = std::move(const_cast<Event&>(events_.top()));
        events_.pop();
        now_ = event.time;
        event.fn();
    }
    return true;
}

void Simulation::run_to_quiescence()
{
    run_until([] { return false; });
}

Duration Simulation::link_delay()
{
    auto lo = schedule_.min_delay.count();
    auto hi = std::max(schedule_.max_delay.count(), lo);
    return Duration{lo + static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(hi - lo + 1))};
}

bool Simulation::roll(double probability)
{
    if (probability <= 0.0) return false;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < probability;
}

bool Simulation::partitioned(std::size_t authority) const
{
    return std::any_of(schedule_.partitions.begin(), schedule_.partitions.end(), [&](const Partition& p) {
        return p.authority == authority && now_ >= p.from && now_ < p.until;
    });
}

void Simulation::record(std::string_view what, std::size_t authority, std::span<const std::uint8_t> bytes)
{
    if (!config_.record_messages) return;
    auto digest = sha256(bytes);
    trace_.messages.push_back(fmt::format("{} {} auth{} kind={} len={} {}", now_.count(), what, authority,
                                          bytes.size() > 1 ? bytes[1] : 0, bytes.size(),
                                          to_hex(std::span(digest).first(6))));
}

bool Simulation::is_honest(std::size_t authority) const
{
    return behaviors_.at(authority) == Behavior::Honest;
}

void Simulation::set_behavior(std::size_t authority, Behavior behavior)
{
    behaviors_.at(authority) = behavior;
}

AuthorityState& Simulation::shard(std::size_t authority, ShardId shard)
{
    return authorities_.at(authority).shards.at(shard);
}

AuthorityState& Simulation::shard_for(std::size_t authority, const Address& account)
{
    return shard(authority, shard_of(account, config_.shards));
}

std::vector<const AuthorityState*> Simulation::honest_shards() const
{
    std::vector<const AuthorityState*> out;
    for (std::size_t i = 0; i < authorities_.size(); ++i) {
        if (!is_honest(i)) continue;
        for (const auto& s : authorities_[i].shards) out.push_back(&s);
    }
    return out;
}

std::size_t Simulation::pending_cross_shard() const
{
    std::size_t n = 0;
    for (const auto& a : authorities_) {
        for (const auto& o : a.outboxes) n += o.pending();
    }
    return n;
}

void Simulation::send_request(std::size_t authority, const Address& route, Bytes envelope, Duration timeout,
                              std::function<void(std::optional<Bytes>)> on_reply)
{
    auto pending = std::make_shared<PendingReply>();
    pending->callback = std::move(on_reply);
    post_after(timeout, [pending] { pending->settle(std::nullopt); });

    auto shard = shard_of(route, config_.shards);
    auto copies = roll(schedule_.duplicate_probability) ? 2 : 1;
    for (int copy = 0; copy < copies; ++copy) {
        if (partitioned(authority) || roll(schedule_.drop_probability)) {
            record("drop-request", authority, envelope);
            continue;
        }
        post_after(link_delay(), [this, authority, shard, envelope, pending] {
            if (partitioned(authority)) {
                record("drop-request", authority, envelope);
                return;
            }
            auto reply = process(authority, shard, envelope);
            if (!reply || roll(schedule_.drop_probability)) return;
            post_after(link_delay(), [this, authority, pending, reply = std::move(*reply)]() mutable {
                record("reply", authority, reply);
                pending->settle(std::move(reply));
            });
        });
    }
}

std::optional<Bytes> Simulation::process(std::size_t authority, ShardId shard, Bytes envelope)
{
    auto behavior = behaviors_[authority];
    if (behavior == Behavior::Silent) return std::nullopt;
    record("deliver", authority, envelope);
    auto& a = authorities_[authority];

    if (behavior == Behavior::EquivocateVotes || behavior == Behavior::ReportZeroSequence) {
        try {
            auto opened = open_envelope(envelope);
            if (behavior == Behavior::EquivocateVotes && opened.kind == MessageKind::TransferOrder) {
                auto order = decode<TransferOrder>(opened.payload);
                if (order.has_valid_signature()) return seal(SignedTransferOrder::create(order, a.name, a.key));
            }
            if (behavior == Behavior::ReportZeroSequence && opened.kind == MessageKind::ConfirmationOrder) {
                auto confirmation = decode<ConfirmationOrder>(opened.payload);
                if (confirmation.certificate.sequence().value() > 0) {
                    return seal(ErrorReply{ErrorCode::MissingEarlierCertificates, 0, "missing earlier certificates"});
                }
            }
        } catch (const FastPayError&) {
            return std::nullopt;
        }
    }

    auto result = dispatch_envelope(a.shards.at(shard), envelope);
    if (result.outgoing) {
        auto& outbox = a.outboxes.at(shard);
        outbox.push(*result.outgoing);
        for (const auto& u : outbox.due(now_, config_.retransmit_interval)) send_cross_shard(authority, u);
        schedule_tick(authority);
    }
    if (result.acknowledged) a.outboxes.at(shard).acknowledge(*result.acknowledged);

    if (behavior == Behavior::CorruptReply && result.reply && result.reply->size() > 2) {
        auto& bytes = *result.reply;
        bytes[2 + rng_() % (bytes.size() - 2)] ^= 0x01;
    }
    return result.reply;
}

void Simulation::send_cross_shard(std::size_t authority, const CrossShardUpdate& update)
{
    auto envelope = seal(update);
    auto copies = roll(schedule_.duplicate_probability) ? 2 : 1;
    for (int copy = 0; copy < copies; ++copy) {
        if (roll(schedule_.drop_probability)) {
            record("drop-update", authority, envelope);
            continue;
        }
        post_after(link_delay(), [this, authority, envelope, target = update.shard_id, source = update.source_shard] {
            record("update", authority, envelope);
            auto& a = authorities_[authority];
            auto result = dispatch_envelope(a.shards.at(target), envelope);
            if (!result.reply || roll(schedule_.drop_probability)) return;
            post_after(link_delay(), [this, authority, source, ack = std::move(*result.reply)] {
                record("ack", authority, ack);
                auto& a = authorities_[authority];
                auto back = dispatch_envelope(a.shards.at(source), ack);
                if (back.acknowledged) a.outboxes.at(source).acknowledge(*back.acknowledged);
            });
        });
    }
}

void Simulation::schedule_tick(std::size_t authority)
{
    auto& a = authorities_[authority];
    if (a.tick_scheduled) return;
    a.tick_scheduled = true;
    post_after(config_.retransmit_interval, [this, authority] {
        auto& a = authorities_[authority];
        a.tick_scheduled = false;
        bool pending = false;
        for (auto& outbox : a.outboxes) {
            for (const auto& u : outbox.due(now_, config_.retransmit_interval)) send_cross_shard(authority, u);
            pending = pending || outbox.pending() > 0;
        }
        if (pending) schedule_tick(authority);
    });
}

void Simulation::relay_funding(const PrimarySynchronizationOrder& sync)
{
    for (std::size_t i = 0; i < authorities_.size(); ++i) spawn(relay_to(i, sync));
}

Task<void> Simulation::relay_to(std::size_t authority, PrimarySynchronizationOrder sync)
{
    auto deadline = now_ + config_.retry.budget;
    auto backoff = config_.retry.initial_backoff;
    for (;;) {
        auto envelope = seal(sync);
        auto reply = co_await request(*this, authority, sync.recipient, std::move(envelope),
                                      config_.retry.request_timeout);
        if (reply) {
            try {
                auto opened = open_envelope(*reply);
                if (opened.kind != MessageKind::ErrorReply) co_return;
                if (decode<ErrorReply>(opened.payload).code != ErrorCode::SkippedFundingIndex) co_return;
            } catch (const FastPayError&) {
            }
        }
        if (now_ + backoff >= deadline) co_return;
        co_await sleep_for(*this, backoff);
        backoff = std::min(backoff * 2, config_.retry.max_backoff);
    }
}

Client& Simulation::client(const std::string& account)
{
    auto it = clients_.find(account);
    if (it == clients_.end()) {
        auto state = ClientState::create(account_key(account), committee_);
        it = clients_.emplace(account, std::make_unique<Client>(std::move(state), *this, ledger_.get(), config_.retry))
                 .first;
    }
    return *it->second;
}

std::optional<std::int64_t> Simulation::quorum_balance(const Address& account)
{
    std::map<std::int64_t, std::size_t> votes;
    for (std::size_t i = 0; i < authorities_.size(); ++i) {
        const auto* state = shard_for(i, account).find_account(account);
        ++votes[state ? state->balance.units() : 0];
    }
    for (const auto& [balance, count] : votes) {
        if (count >= committee_.quorum_threshold()) return balance;
    }
    return std::nullopt;
}

std::vector<Certificate> Simulation::certificates() const
{
    CertificateSet set;
    set.add_all(formed_);
    for (const auto& a : authorities_) {
        for (const auto& s : a.shards) {
            for (const auto& [address, account] : s.accounts()) set.add_all(account.confirmed);
        }
    }
    return set.all();
}

AuditReport Simulation::audit() const
{
    auto shards = honest_shards();
    auto certs = certificates();
    return audit_system(shards, *ledger_, certs);
}

nlohmann::json Simulation::snapshot()
{
    nlohmann::json j;
    j["time_ns"] = now_.count();
    nlohmann::json balances = nlohmann::json::object();
    for (const auto& [name, c] : clients_) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t i = 0; i < authorities_.size(); ++i) {
            const auto* state = shard_for(i, c->address()).find_account(c->address());
            row.push_back(state ? state->balance.units() : 0);
        }
        balances[name] = row;
    }
    j["balances"] = balances;
    j["primary_balance"] = ledger_->total_balance().units();
    j["cross_shard_pending"] = pending_cross_shard();
    return j;
}

ActionRecord Simulation::execute(const ScriptAction& action)
{
    ActionRecord record{action.to_string(), "ok", {}, {}};
    try {
        switch (action.kind) {
        case ScriptAction::Kind::Fund: {
            ensure(action.amount > 0, ErrorCode::ZeroAmount, "zero funding");
            client(action.from);
            Amount amount{action.amount};
            ledger_->deposit(faucet_, amount);
            auto [tx, sync] = ledger_->fund(faucet_, account_address(action.from), amount);
            if (config_.relay_funding) relay_funding(sync);
            break;
        }
        case ScriptAction::Kind::Transfer:
        case ScriptAction::Kind::Withdraw: {
            auto& sender = client(action.from);
            auto recipient = action.kind == ScriptAction::Kind::Transfer
                                 ? Recipient::fastpay(client(action.to).address())
                                 : Recipient::primary(sender.address());
            auto cert = sync_wait(*this, sender.transfer(recipient, Amount{action.amount}));
            formed_.push_back(cert);
            trace_.certificates.push_back(encode_hex(cert));
            if (action.kind == ScriptAction::Kind::Transfer) {
                sync_wait(*this, client(action.to).receive_certificate(cert));
            } else {
                trace_.primary_payouts += ledger_->redeem(RedeemTransaction{cert}).units();
            }
            break;
        }
        case ScriptAction::Kind::Sync:
            sync_wait(*this, client(action.from).sync_account());
            break;
        }
    } catch (const FastPayError& e) {
        bool refused = e.code() == ErrorCode::InsufficientBalance || e.code() == ErrorCode::ZeroAmount;
        record.outcome = refused ? "skipped" : "failed";
        record.error = fmt::format("{}: {}", error_name(e.code()), e.what());
    }
    run_to_quiescence();
    record.completed_at = now_;
    auto report = audit();
    trace_.audit_violations += report.violations.size();
    auto snap = snapshot();
    snap["after"] = record.action;
    snap["violations"] = report.violations.size();
    trace_.snapshots.push_back(std::move(snap));
    trace_.actions.push_back(record);
    return record;
}

ExecutionTrace Simulation::run(const std::vector<ScriptAction>& script)
{
    for (const auto& action : script) execute(action);
    for (const auto& [name, c] : clients_) {
        auto b = quorum_balance(c->address());
        trace_.final_balances[name] = b ? *b : std::numeric_limits<std::int64_t>::min();
    }
    return trace_;
}

}  // namespace fastpay
