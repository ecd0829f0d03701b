#include "fastpay/committee.hpp"

#include <fmt/format.h>

#include <set>

namespace fastpay {

Committee::Committee(std::vector<AuthorityInfo> authorities, std::size_t faults_tolerated)
    : authorities_(std::move(authorities)), faults_(faults_tolerated)
{
    ensure(authorities_.size() == 3 * faults_ + 1, ErrorCode::InvalidCommittee,
           fmt::format("committee of {} authorities cannot tolerate f={} (need 3f+1)", authorities_.size(), faults_));
    std::set<std::string_view> names;
    for (const auto& a : authorities_) {
        ensure(!a.name.empty() && a.name.size() <= kMaxNameLength, ErrorCode::InvalidCommittee,
               "authority names must be 1..32 bytes");
        ensure(names.insert(a.name).second, ErrorCode::InvalidCommittee,
               fmt::format("duplicate authority name '{}'", a.name));
    }
}

Committee Committee::from_members(std::vector<AuthorityInfo> authorities)
{
    ensure(!authorities.empty() && (authorities.size() - 1) % 3 == 0, ErrorCode::InvalidCommittee,
           fmt::format("{} authorities is not of the form 3f+1", authorities.size()));
    auto f = (authorities.size() - 1) / 3;
    return Committee(std::move(authorities), f);
}

const AuthorityInfo* Committee::find(std::string_view name) const
{
    for (const auto& a : authorities_) {
        if (a.name == name) {
            return &a;
        }
    }
    return nullptr;
}

std::optional<std::size_t> Committee::index_of(std::string_view name) const
{
    for (std::size_t i = 0; i < authorities_.size(); ++i) {
        if (authorities_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

bool operator==(const Committee& a, const Committee& b)
{
    if (a.faults_ != b.faults_ || a.authorities_.size() != b.authorities_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.authorities_.size(); ++i) {
        if (a.authorities_[i].name != b.authorities_[i].name || a.authorities_[i].key != b.authorities_[i].key) {
            return false;
        }
    }
    return true;
}

}  // namespace fastpay
