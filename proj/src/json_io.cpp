#include "fastpay/json_io.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>

namespace fastpay {

nlohmann::json committee_to_json(const Committee& committee)
{
    nlohmann::json members = nlohmann::json::array();
    for (const auto& a : committee.authorities()) {
        members.push_back({{"name", a.name}, {"public_key", a.key.hex()}});
    }
    return {{"f", committee.faults_tolerated()}, {"authorities", members}};
}

Committee committee_from_json(const nlohmann::json& j)
{
    try {
        std::vector<AuthorityInfo> members;
        for (const auto& a : j.at("authorities")) {
            members.push_back({a.at("name").get<std::string>(), PublicKey::from_hex(a.at("public_key").get<std::string>())});
        }
        return Committee(std::move(members), j.at("f").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, fmt::format("malformed committee: {}", e.what()));
    }
}

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    ensure(in.good(), ErrorCode::ConfigError, fmt::format("cannot open '{}'", path));
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, fmt::format("cannot parse '{}': {}", path, e.what()));
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j)
{
    // Write-then-rename so a crash never leaves a truncated state file.
    auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        ensure(out.good(), ErrorCode::ConfigError, fmt::format("cannot write '{}'", tmp));
        out << j.dump(2) << '\n';
        ensure(out.good(), ErrorCode::ConfigError, fmt::format("write to '{}' failed", tmp));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace fastpay
