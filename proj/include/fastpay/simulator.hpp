#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastpay/audit.hpp"
#include "fastpay/authority.hpp"
#include "fastpay/client.hpp"
#include "fastpay/dispatch.hpp"
#include "fastpay/primary_ledger.hpp"
#include "fastpay/runtime.hpp"

namespace fastpay {

enum class Behavior {
    Honest,
    Silent,               // never answers
    EquivocateVotes,      // votes for any correctly signed order, without checks or locking
    ReportZeroSequence,   // answers every confirmation with "missing certificates from 0"
    CorruptReply,         // processes honestly, flips one byte of every reply
};

std::string behavior_name(Behavior behavior);
Behavior behavior_from_name(std::string_view name);

// Authority `authority` is cut off from clients during [from, until).
struct Partition {
    std::size_t authority = 0;
    Duration from{};
    Duration until{};
};

struct Schedule {
    std::uint64_t seed = 0;
    Duration min_delay = 1ms;
    Duration max_delay = 10ms;
    double drop_probability = 0.0;
    double duplicate_probability = 0.0;
    std::vector<Partition> partitions;
    std::map<std::size_t, Behavior> byzantine;
};

struct SimConfig {
    std::size_t faults = 1;           // committee of 3f+1
    std::uint32_t shards = 1;         // per authority
    Duration retransmit_interval = 50ms;
    bool relay_funding = true;        // push sync orders to authorities on every deposit
    bool record_messages = false;
    RetryPolicy retry{};
};

// One action of a scenario script.
struct ScriptAction {
    enum class Kind { Fund, Transfer, Withdraw, Sync };
    Kind kind = Kind::Fund;
    std::string from;  // account for fund/withdraw/sync, sender for transfer
    std::string to;    // transfer recipient
    std::uint64_t amount = 0;

    std::string to_string() const;
    friend bool operator==(const ScriptAction&, const ScriptAction&) = default;
};

// One action per line: `fund <acct> <amt>`, `transfer <from> <to> <amt>`,
// `withdraw <acct> <amt>`, `sync <acct>`. Blank lines and `#` comments are
// ignored. Throws ScriptError.
std::vector<ScriptAction> parse_script(std::string_view text);
std::string format_script(const std::vector<ScriptAction>& script);

struct ActionRecord {
    std::string action;
    std::string outcome;  // ok | skipped | failed
    std::string error;
    Duration completed_at{};
};

struct ExecutionTrace {
    std::uint64_t seed = 0;
    std::vector<std::string> messages;
    std::vector<ActionRecord> actions;
    std::vector<std::string> certificates;  // hex, in formation order
    std::vector<nlohmann::json> snapshots;  // per quiescent point
    std::map<std::string, std::int64_t> final_balances;  // quorum-visible
    std::uint64_t primary_payouts = 0;
    std::size_t audit_violations = 0;

    nlohmann::json to_json() const;
};

// Final balances of a sequential single-map ledger. Invalid transfers (amount
// above the sender's balance, zero amounts) are skipped, as a correct client
// would refuse them.
struct ReferenceResult {
    std::map<std::string, std::int64_t> balances;
    std::uint64_t primary_payouts = 0;
    std::vector<bool> applied;
};
ReferenceResult reference_execution(const std::vector<ScriptAction>& script);

Address account_address(const std::string& name);
KeyPair account_key(const std::string& name);

// Discrete-event virtual network, in-process authorities, a Primary emulator
// and one client per script account.
class Simulation final : public Executor, public AuthorityTransport {
public:
    Simulation(SimConfig config, Schedule schedule);
    ~Simulation() override;

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    // Executor
    Duration now() const override { return now_; }
    void post_after(Duration delay, std::function<void()> fn) override;
    bool run_until(const std::function<bool()>& done) override;

    // AuthorityTransport
    Executor& executor() override { return *this; }
    std::size_t authority_count() const override { return authorities_.size(); }
    void send_request(std::size_t authority, const Address& route, Bytes envelope, Duration timeout,
                      std::function<void(std::optional<Bytes>)> on_reply) override;

    // Runs until no event is left.
    void run_to_quiescence();

    // Executes one action, runs to quiescence, snapshots and audits.
    ActionRecord execute(const ScriptAction& action);
    ExecutionTrace run(const std::vector<ScriptAction>& script);

    const Committee& committee() const { return committee_; }
    PrimaryLedger& ledger() { return *ledger_; }
    Client& client(const std::string& account);
    bool has_client(const std::string& account) const { return clients_.count(account) > 0; }

    std::size_t faults() const { return config_.faults; }
    bool is_honest(std::size_t authority) const;
    AuthorityState& shard(std::size_t authority, ShardId shard);
    AuthorityState& shard_for(std::size_t authority, const Address& account);
    std::vector<const AuthorityState*> honest_shards() const;
    std::size_t pending_cross_shard() const;

    // Balance held by at least 2f+1 authorities, if they agree.
    std::optional<std::int64_t> quorum_balance(const Address& account);

    std::vector<Certificate> certificates() const;
    AuditReport audit() const;
    nlohmann::json snapshot();
    ExecutionTrace& trace() { return trace_; }

    // Fault injection for the liveness scenarios.
    void set_behavior(std::size_t authority, Behavior behavior);
    void add_partition(Partition partition) { schedule_.partitions.push_back(partition); }

private:
    struct Event {
        Duration time;
        std::uint64_t order;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const
        {
            return a.time != b.time ? a.time > b.time : a.order > b.order;
        }
    };
    struct SimAuthority {
        std::string name;
        KeyPair key;
        std::vector<AuthorityState> shards;
        std::vector<CrossShardOutbox> outboxes;
        bool tick_scheduled = false;
    };

    Duration link_delay();
    bool roll(double probability);
    bool partitioned(std::size_t authority) const;
    void record(std::string_view what, std::size_t authority, std::span<const std::uint8_t> bytes);

    std::optional<Bytes> process(std::size_t authority, ShardId shard, Bytes envelope);
    void send_cross_shard(std::size_t authority, const CrossShardUpdate& update);
    void schedule_tick(std::size_t authority);
    void relay_funding(const PrimarySynchronizationOrder& sync);
    Task<void> relay_to(std::size_t authority, PrimarySynchronizationOrder sync);

    SimConfig config_;
    Schedule schedule_;
    std::mt19937_64 rng_;
    Duration now_{};
    std::uint64_t next_order_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> events_;

    std::vector<KeyPair> authority_keys_;
    Committee committee_;
    std::vector<SimAuthority> authorities_;
    std::vector<Behavior> behaviors_;
    std::unique_ptr<PrimaryLedger> ledger_;
    Address faucet_;
    std::map<std::string, std::unique_ptr<Client>> clients_;
    std::vector<Certificate> formed_;
    ExecutionTrace trace_;
};

// Random honest-user scripts over a small account population. Transfers may
// exceed balances; both the simulator and the reference skip them.
std::vector<ScriptAction> random_script(std::mt19937_64& rng, std::size_t accounts, std::size_t actions,
                                        bool withdrawals = true);

}  // namespace fastpay
