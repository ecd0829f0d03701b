#include "fastpay/dispatch.hpp"

#include <algorithm>

namespace fastpay {

Envelope open_envelope(std::span<const std::uint8_t> bytes)
{
    ensure(bytes.size() >= 2, ErrorCode::DecodeError, "envelope too short");
    ensure(bytes[0] == kProtocolVersion, ErrorCode::VersionMismatch, "unsupported protocol version", bytes[0]);
    auto kind = bytes[1];
    ensure(kind >= static_cast<std::uint8_t>(MessageKind::TransferOrder) &&
               kind <= static_cast<std::uint8_t>(MessageKind::Certificate),
           ErrorCode::DecodeError, "unknown message kind");
    return Envelope{static_cast<MessageKind>(kind), bytes.subspan(2)};
}

bool is_request_kind(MessageKind kind)
{
    switch (kind) {
    case MessageKind::TransferOrder:
    case MessageKind::ConfirmationOrder:
    case MessageKind::PrimarySynchronizationOrder:
    case MessageKind::CrossShardUpdate:
    case MessageKind::CrossShardAck:
    case MessageKind::AccountInfoRequest:
        return true;
    default:
        return false;
    }
}

Bytes error_envelope(const FastPayError& error)
{
    return seal(ErrorReply{error.code(), error.detail(), error.what()});
}

DispatchResult dispatch_envelope(AuthorityState& state, std::span<const std::uint8_t> bytes)
{
    DispatchResult result;
    Envelope envelope;
    try {
        envelope = open_envelope(bytes);
    } catch (const FastPayError&) {
        return result;
    }

    try {
        switch (envelope.kind) {
        case MessageKind::TransferOrder: {
            auto order = decode<TransferOrder>(envelope.payload);
            result.reply = seal(state.handle_transfer_order(order));
            break;
        }
        case MessageKind::ConfirmationOrder: {
            auto confirmation = decode<ConfirmationOrder>(envelope.payload);
            auto outcome = state.handle_confirmation_order(confirmation);
            result.outgoing = std::move(outcome.cross_shard);
            result.reply = seal(state.account_summary(confirmation.certificate.sender()));
            break;
        }
        case MessageKind::PrimarySynchronizationOrder: {
            auto sync = decode<PrimarySynchronizationOrder>(envelope.payload);
            state.handle_primary_synchronization_order(sync);
            result.reply = seal(state.account_summary(sync.recipient));
            break;
        }
        case MessageKind::CrossShardUpdate: {
            auto update = decode<CrossShardUpdate>(envelope.payload);
            result.reply = seal(state.handle_cross_shard_commit(update));
            break;
        }
        case MessageKind::CrossShardAck: {
            auto ack = decode<CrossShardAck>(envelope.payload);
            if (state.verify_channel_ack(ack)) {
                result.acknowledged = ack;
            }
            break;
        }
        case MessageKind::AccountInfoRequest: {
            auto request = decode<AccountInfoRequest>(envelope.payload);
            result.reply = seal(state.handle_account_info_request(request));
            break;
        }
        default:
            result.reply = error_envelope(FastPayError(ErrorCode::InvalidRequest, "not a request message"));
            break;
        }
    } catch (const FastPayError& e) {
        if (e.code() == ErrorCode::DecodeError) {
            return DispatchResult{};
        }
        result.reply = error_envelope(e);
    }
    return result;
}

void CrossShardOutbox::push(CrossShardUpdate update)
{
    auto key = std::make_pair(update.shard_id, update.channel_sequence);
    entries_.emplace(key, Entry{std::move(update), std::nullopt});
}

bool CrossShardOutbox::acknowledge(const CrossShardAck& ack)
{
    return entries_.erase({ack.shard_id, ack.channel_sequence}) > 0;
}

std::vector<CrossShardUpdate> CrossShardOutbox::due(Clock now, Clock interval)
{
    std::vector<CrossShardUpdate> out;
    for (auto& [key, entry] : entries_) {
        // Doubles per attempt up to 32x, so that a busy peer is not flooded.
        auto wait = interval * (1 << std::min<std::uint32_t>(entry.attempts, 6) >> 1);
        if (!entry.last_sent || now - *entry.last_sent >= wait) {
            entry.last_sent = now;
            ++entry.attempts;
            out.push_back(entry.update);
        }
    }
    return out;
}

}  // namespace fastpay
