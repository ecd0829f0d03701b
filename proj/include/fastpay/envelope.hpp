#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "fastpay/messages.hpp"

namespace fastpay {

inline constexpr std::uint8_t kProtocolVersion = 1;
// Every request kind must fit one datagram.
inline constexpr std::size_t kMaxDatagramRequest = 1400;

template <typename T>
struct MessageKindOf;

#define FASTPAY_MESSAGE_KIND(Type)                                                   \
    template <>                                                                      \
    struct MessageKindOf<Type> {                                                     \
        static constexpr MessageKind value = MessageKind::Type;                      \
    }

FASTPAY_MESSAGE_KIND(TransferOrder);
FASTPAY_MESSAGE_KIND(SignedTransferOrder);
FASTPAY_MESSAGE_KIND(ConfirmationOrder);
FASTPAY_MESSAGE_KIND(PrimarySynchronizationOrder);
FASTPAY_MESSAGE_KIND(RedeemTransaction);
FASTPAY_MESSAGE_KIND(CrossShardUpdate);
FASTPAY_MESSAGE_KIND(CrossShardAck);
FASTPAY_MESSAGE_KIND(AccountInfoRequest);
FASTPAY_MESSAGE_KIND(AccountInfoResponse);
FASTPAY_MESSAGE_KIND(ErrorReply);
FASTPAY_MESSAGE_KIND(Certificate);

#undef FASTPAY_MESSAGE_KIND

struct Envelope {
    MessageKind kind = MessageKind::ErrorReply;
    std::span<const std::uint8_t> payload;
};

// [version:1][kind:1][payload]
template <typename T>
Bytes seal(const T& message)
{
    ByteWriter w;
    w.u8(kProtocolVersion);
    w.u8(static_cast<std::uint8_t>(MessageKindOf<T>::value));
    write(w, message);
    return w.take();
}

// Throws VersionMismatch or DecodeError; never misparses a foreign version.
Envelope open_envelope(std::span<const std::uint8_t> bytes);

template <typename T>
T open_as(const Envelope& envelope)
{
    ensure(envelope.kind == MessageKindOf<T>::value, ErrorCode::DecodeError, "unexpected message kind");
    return decode<T>(envelope.payload);
}

bool is_request_kind(MessageKind kind);

}  // namespace fastpay
