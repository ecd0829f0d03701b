#include "fastpay/encoding.hpp"

namespace fastpay {

void ByteWriter::short_string(std::string_view s)
{
    ensure(s.size() <= 255, ErrorCode::DecodeError, "string too long for one-byte length prefix");
    u8(static_cast<std::uint8_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n)
{
    ensure(remaining() >= n, ErrorCode::DecodeError, "truncated input");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint8_t ByteReader::u8()
{
    return take(1)[0];
}

std::uint32_t ByteReader::u32()
{
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | s[i];
    }
    return v;
}

std::uint64_t ByteReader::u64()
{
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | s[i];
    }
    return v;
}

bool ByteReader::flag()
{
    auto v = u8();
    ensure(v <= 1, ErrorCode::DecodeError, "invalid boolean tag");
    return v == 1;
}

std::string ByteReader::short_string()
{
    auto n = u8();
    auto s = take(n);
    return std::string(s.begin(), s.end());
}

std::uint32_t ByteReader::count(std::size_t min_element_size)
{
    auto n = u32();
    ensure(min_element_size == 0 || n <= remaining() / min_element_size, ErrorCode::DecodeError,
           "list count exceeds input");
    return n;
}

void ByteReader::expect_end() const
{
    ensure(remaining() == 0, ErrorCode::DecodeError, "trailing bytes after message");
}

}  // namespace fastpay
