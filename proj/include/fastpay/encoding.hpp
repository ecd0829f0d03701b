#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "fastpay/types.hpp"

namespace fastpay {

// Little-endian fixed-width writer used for every canonical encoding.
class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
    void flag(bool v) { u8(v ? 1 : 0); }

    template <std::size_t N>
    void fixed(const std::array<std::uint8_t, N>& bytes)
    {
        out_.insert(out_.end(), bytes.begin(), bytes.end());
    }

    void raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

    // One-byte length prefix; used for authority names.
    void short_string(std::string_view s);

    const Bytes& bytes() const noexcept { return out_; }
    Bytes take() { return std::move(out_); }

private:
    void put_le(std::uint64_t v, int width)
    {
        for (int i = 0; i < width; ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    Bytes out_;
};

// Bounds-checked reader. Any malformed input raises DecodeError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    bool flag();

    template <std::size_t N>
    void fixed(std::array<std::uint8_t, N>& out)
    {
        auto s = take(N);
        std::copy(s.begin(), s.end(), out.begin());
    }

    std::string short_string();

    // Count prefix for a list whose elements occupy at least `min_element_size`
    // bytes each; rejects counts the remaining input cannot hold.
    std::uint32_t count(std::size_t min_element_size);

    std::span<const std::uint8_t> rest() { return take(remaining()); }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }
    void expect_end() const;

private:
    std::span<const std::uint8_t> take(std::size_t n);

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace fastpay
