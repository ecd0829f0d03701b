#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fastpay/crypto.hpp"

namespace fastpay {

struct AuthorityInfo {
    std::string name;
    PublicKey key;
};

// Fixed set of 3f+1 authorities. Construction validates the size and the
// uniqueness of names; every instance in existence is valid.
class Committee {
public:
    static constexpr std::size_t kMaxNameLength = 32;

    Committee(std::vector<AuthorityInfo> authorities, std::size_t faults_tolerated);

    // Derives f from the member count; the count must be of the form 3f+1.
    static Committee from_members(std::vector<AuthorityInfo> authorities);

    std::size_t size() const noexcept { return authorities_.size(); }
    std::size_t faults_tolerated() const noexcept { return faults_; }
    std::size_t quorum_threshold() const noexcept { return 2 * faults_ + 1; }

    const std::vector<AuthorityInfo>& authorities() const noexcept { return authorities_; }
    const AuthorityInfo* find(std::string_view name) const;
    std::optional<std::size_t> index_of(std::string_view name) const;

    friend bool operator==(const Committee& a, const Committee& b);

private:
    std::vector<AuthorityInfo> authorities_;
    std::size_t faults_;
};

}  // namespace fastpay
