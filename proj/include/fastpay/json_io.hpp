#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "fastpay/committee.hpp"
#include "fastpay/messages.hpp"

namespace fastpay {

nlohmann::json committee_to_json(const Committee& committee);
Committee committee_from_json(const nlohmann::json& j);

// Messages are stored in JSON files as hex of their canonical encoding.
template <typename T>
std::string encode_hex(const T& message)
{
    return to_hex(encode(message));
}

template <typename T>
T decode_hex(std::string_view hex)
{
    return decode<T>(from_hex(hex));
}

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace fastpay
