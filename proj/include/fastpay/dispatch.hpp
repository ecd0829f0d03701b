#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fastpay/authority.hpp"
#include "fastpay/envelope.hpp"

namespace fastpay {

struct DispatchResult {
    std::optional<Bytes> reply;                 // back to the source of the envelope
    std::optional<CrossShardUpdate> outgoing;   // to the peer shard update->shard_id
    std::optional<CrossShardAck> acknowledged;  // ack for one of our outgoing updates
};

// Decodes one inbound envelope, runs the matching authority handler and
// encodes its result. Handler failures become ErrorReply envelopes; malformed
// envelopes yield an empty result (datagram semantics: dropped silently).
DispatchResult dispatch_envelope(AuthorityState& state, std::span<const std::uint8_t> envelope);

Bytes error_envelope(const FastPayError& error);

// Unacknowledged cross-shard updates of one shard, retransmitted until the
// peer shard acknowledges them.
class CrossShardOutbox {
public:
    using Clock = std::chrono::nanoseconds;

    void push(CrossShardUpdate update);
    // Drops the matching entry; returns false for unknown or duplicate acks.
    bool acknowledge(const CrossShardAck& ack);
    // Updates never sent, or whose last transmission is older than `interval`
    // scaled by exponential backoff; marks them as sent at `now`.
    std::vector<CrossShardUpdate> due(Clock now, Clock interval);

    std::size_t pending() const noexcept { return entries_.size(); }

private:
    struct Entry {
        CrossShardUpdate update;
        std::optional<Clock> last_sent;
        std::uint32_t attempts = 0;
    };
    std::map<std::pair<ShardId, std::uint64_t>, Entry> entries_;
};

}  // namespace fastpay
