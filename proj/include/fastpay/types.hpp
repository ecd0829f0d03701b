#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastpay/error.hpp"

namespace fastpay {

using Bytes = std::vector<std::uint8_t>;
using ShardId = std::uint32_t;

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

template <std::size_t N>
std::array<std::uint8_t, N> array_from_hex(std::string_view hex)
{
    auto bytes = from_hex(hex);
    ensure(bytes.size() == N, ErrorCode::DecodeError, "hex string has wrong length");
    std::array<std::uint8_t, N> out{};
    std::copy(bytes.begin(), bytes.end(), out.begin());
    return out;
}

// Non-negative value. Arithmetic is checked; overflow and underflow are hard
// errors, never wraparound.
class Amount {
public:
    constexpr Amount() = default;
    constexpr explicit Amount(std::uint64_t units) : units_(units) {}

    constexpr std::uint64_t units() const noexcept { return units_; }
    constexpr bool is_zero() const noexcept { return units_ == 0; }

    Amount checked_add(Amount other) const;
    Amount checked_sub(Amount other) const;

    friend constexpr auto operator<=>(Amount, Amount) = default;

private:
    std::uint64_t units_ = 0;
};

// Signed balance as held by an authority. May go temporarily negative.
class Balance {
public:
    constexpr Balance() = default;
    constexpr explicit Balance(std::int64_t units) : units_(units) {}

    static Balance from(Amount amount);

    constexpr std::int64_t units() const noexcept { return units_; }

    Balance checked_add(Amount amount) const;
    Balance checked_sub(Amount amount) const;
    Balance checked_add(Balance other) const;

    bool covers(Amount amount) const noexcept
    {
        return units_ >= 0 && static_cast<std::uint64_t>(units_) >= amount.units();
    }

    friend constexpr auto operator<=>(Balance, Balance) = default;

private:
    std::int64_t units_ = 0;
};

class SequenceNumber {
public:
    constexpr SequenceNumber() = default;
    constexpr explicit SequenceNumber(std::uint64_t value) : value_(value) {}

    constexpr std::uint64_t value() const noexcept { return value_; }
    SequenceNumber next() const;

    friend constexpr auto operator<=>(SequenceNumber, SequenceNumber) = default;

private:
    std::uint64_t value_ = 0;
};

// SHA-256 of an account's public verification key.
struct Address {
    static constexpr std::size_t kSize = 32;
    std::array<std::uint8_t, kSize> bytes{};

    std::string hex() const { return to_hex(bytes); }
    std::string short_hex() const { return hex().substr(0, 8); }
    static Address from_hex(std::string_view hex) { return Address{array_from_hex<kSize>(hex)}; }

    friend auto operator<=>(const Address&, const Address&) = default;
};

struct AddressHash {
    std::size_t operator()(const Address& a) const noexcept
    {
        std::size_t h = 0;
        for (std::size_t i = 0; i < sizeof(std::size_t); ++i) {
            h = (h << 8) | a.bytes[i];
        }
        return h;
    }
};

}  // namespace fastpay
