#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "fastpay/authority.hpp"
#include "fastpay/primary_ledger.hpp"

namespace fastpay {

struct Violation {
    std::string check;      // invariant, solvency, account-safety, funding-log, balance-check, ...
    std::string authority;  // empty for system-wide checks
    std::string account;    // hex address, empty for system-wide checks
    std::string detail;

    friend bool operator==(const Violation&, const Violation&) = default;
};

struct AuditReport {
    std::vector<Violation> violations;
    std::size_t authorities_checked = 0;
    std::size_t accounts_checked = 0;
    std::size_t certificates_checked = 0;

    bool ok() const noexcept { return violations.empty(); }
    void merge(const AuditReport& other);

    nlohmann::json to_json() const;
    std::string to_text() const;

    friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

// Certificates of an execution, deduplicated by certified order. Distinct
// certificates for one (sender, sequence) are kept: they are the evidence of
// an equivocation.
class CertificateSet {
public:
    void add(const Certificate& certificate);
    void add_all(std::span<const Certificate> certificates);

    const std::vector<Certificate>& all() const noexcept { return certificates_; }
    std::size_t size() const noexcept { return certificates_.size(); }

private:
    std::map<std::tuple<Address, std::uint64_t, Digest>, std::size_t> index_;
    std::vector<Certificate> certificates_;
};

// Per-account checks on one authority's view of an account: the balance
// invariant, the gap-free confirmed list, the funding log bound and the
// pending-order balance check.
AuditReport audit_account_state(const std::string& authority, const Address& account,
                                 const AccountOffchainState& state, const FundingSource& primary);

AuditReport audit_authority(const AuthorityState& shard, const FundingSource& primary);

// Outgoing certified amount of `account` is covered by its Primary funding
// plus its incoming certified amount.
AuditReport audit_account_safety(std::span<const Certificate> certificates, const FundingSource& primary,
                                 const Address& account);

// Certified transfers to the Primary never exceed total funding.
AuditReport audit_solvency(std::span<const Certificate> certificates, const PrimaryLedger& primary);

// Contract balance equals funding minus redemptions; redeemed certificates
// are unique.
AuditReport audit_primary(const PrimaryLedger& primary);

// Two valid certificates for one (sender, sequence) with different orders.
// Attributes the conflict to the authorities that signed both.
AuditReport audit_certificate_uniqueness(std::span<const Certificate> certificates);

// Everything above over a snapshot: all shards of all authorities, the
// Primary, and the certificates formed so far. Accounts for the safety check
// are every sender and recipient seen in the certificates or the funding log.
AuditReport audit_system(std::span<const AuthorityState* const> shards, const PrimaryLedger& primary,
                         std::span<const Certificate> certificates);

}  // namespace fastpay
