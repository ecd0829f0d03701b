#include "fastpay/audit.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

namespace fastpay {

namespace {

using Wide = __int128;

std::string wide_str(Wide v)
{
    if (v == 0) return "0";
    bool negative = v < 0;
    std::string s;
    while (v != 0) {
        auto digit = static_cast<int>(v % 10);
        s.push_back(static_cast<char>('0' + (negative ? -digit : digit)));
        v /= 10;
    }
    if (negative) s.push_back('-');
    std::reverse(s.begin(), s.end());
    return s;
}

Wide sum_amounts(std::span<const Certificate> certificates)
{
    Wide total = 0;
    for (const auto& c : certificates) total += c.amount().units();
    return total;
}

}  // namespace

void AuditReport::merge(const AuditReport& other)
{
    violations.insert(violations.end(), other.violations.begin(), other.violations.end());
    authorities_checked += other.authorities_checked;
    accounts_checked += other.accounts_checked;
    certificates_checked += other.certificates_checked;
}

nlohmann::json AuditReport::to_json() const
{
    nlohmann::json j;
    j["ok"] = ok();
    j["authorities_checked"] = authorities_checked;
    j["accounts_checked"] = accounts_checked;
    j["certificates_checked"] = certificates_checked;
    j["violations"] = nlohmann::json::array();
    for (const auto& v : violations) {
        j["violations"].push_back(
            {{"check", v.check}, {"authority", v.authority}, {"account", v.account}, {"detail", v.detail}});
    }
    return j;
}

std::string AuditReport::to_text() const
{
    std::string out = fmt::format("audit: {} ({} authorities/shards, {} accounts, {} certificates)\n",
                                  ok() ? "OK" : "VIOLATIONS", authorities_checked, accounts_checked,
                                  certificates_checked);
    for (const auto& v : violations) {
        out += fmt::format("  [{}]", v.check);
        if (!v.authority.empty()) out += fmt::format(" authority={}", v.authority);
        if (!v.account.empty()) out += fmt::format(" account={}", v.account.substr(0, 16));
        out += fmt::format(" {}\n", v.detail);
    }
    return out;
}

void CertificateSet::add(const Certificate& certificate)
{
    auto key = std::make_tuple(certificate.sender(), certificate.sequence().value(), certificate.order.digest());
    if (index_.emplace(key, certificates_.size()).second) {
        certificates_.push_back(certificate);
    }
}

void CertificateSet::add_all(std::span<const Certificate> certificates)
{
    for (const auto& c : certificates) add(c);
}

AuditReport audit_account_state(const std::string& authority, const Address& account,
                                 const AccountOffchainState& state, const FundingSource& primary)
{
    AuditReport report;
    report.accounts_checked = 1;
    auto flag = [&](std::string check, std::string detail) {
        report.violations.push_back({std::move(check), authority, account.hex(), std::move(detail)});
    };

    Wide funding = 0;
    for (const auto& s : state.synchronized) funding += s.amount.units();
    Wide confirmed = sum_amounts(state.confirmed);
    Wide received = sum_amounts(state.received);
    Wide lhs = Wide{state.balance.units()} + confirmed;
    Wide rhs = funding + received;
    if (lhs > rhs) {
        flag("invariant", fmt::format("balance {} + confirmed {} exceeds funding {} + received {}",
                                      state.balance.units(), wide_str(confirmed), wide_str(funding),
                                      wide_str(received)));
    }

    auto n = state.next_sequence.value();
    if (state.confirmed.size() != n) {
        flag("confirmed-list", fmt::format("{} confirmed certificates but next_sequence is {}",
                                           state.confirmed.size(), n));
    }
    for (std::size_t k = 0; k < state.confirmed.size(); ++k) {
        const auto& c = state.confirmed[k];
        if (c.sequence().value() != k || c.sender() != account) {
            flag("confirmed-list", fmt::format("entry {} has sequence {} from {}", k, c.sequence().value(),
                                               c.sender().short_hex()));
            break;
        }
    }

    Wide on_primary = primary.funding_of(account).units();
    if (funding > on_primary) {
        flag("funding-log",
             fmt::format("synchronized funding {} exceeds Primary funding {}", wide_str(funding), wide_str(on_primary)));
    }

    if (state.pending) {
        const auto& order = state.pending->order;
        if (!state.balance.covers(order.amount)) {
            flag("balance-check", fmt::format("pending amount {} exceeds balance {}", order.amount.units(),
                                              state.balance.units()));
        }
        if (order.sequence != state.next_sequence || order.sender != account) {
            flag("balance-check", fmt::format("pending order at sequence {} but next_sequence is {}",
                                              order.sequence.value(), n));
        }
    }
    return report;
}

AuditReport audit_authority(const AuthorityState& shard, const FundingSource& primary)
{
    AuditReport report;
    auto label = fmt::format("{}/{}", shard.name(), shard.shard_id());
    for (const auto& [address, state] : shard.accounts()) {
        report.merge(audit_account_state(label, address, state, primary));
    }
    report.authorities_checked = 1;
    return report;
}

AuditReport audit_account_safety(std::span<const Certificate> certificates, const FundingSource& primary,
                                 const Address& account)
{
    AuditReport report;
    report.accounts_checked = 1;
    CertificateSet distinct;
    distinct.add_all(certificates);
    Wide outgoing = 0;
    Wide incoming = 0;
    for (const auto& c : distinct.all()) {
        if (c.sender() == account) outgoing += c.amount().units();
        if (c.recipient().is_fastpay() && c.recipient().address == account) incoming += c.amount().units();
    }
    Wide funding = primary.funding_of(account).units();
    if (outgoing > funding + incoming) {
        report.violations.push_back({"account-safety", "", account.hex(),
                                     fmt::format("certified outgoing {} exceeds funding {} + incoming {}",
                                                 wide_str(outgoing), wide_str(funding), wide_str(incoming))});
    }
    return report;
}

AuditReport audit_solvency(std::span<const Certificate> certificates, const PrimaryLedger& primary)
{
    AuditReport report;
    CertificateSet distinct;
    distinct.add_all(certificates);
    report.certificates_checked = distinct.size();
    Wide to_primary = 0;
    for (const auto& c : distinct.all()) {
        if (c.recipient().is_primary()) to_primary += c.amount().units();
    }
    Wide funding = primary.total_funding().units();
    if (to_primary > funding) {
        report.violations.push_back({"solvency", "", "",
                                     fmt::format("certified transfers to the Primary {} exceed total funding {}",
                                                 wide_str(to_primary), wide_str(funding))});
    }
    return report;
}

AuditReport audit_primary(const PrimaryLedger& primary)
{
    AuditReport report;
    Wide expected = Wide{primary.total_funding().units()} - Wide{primary.total_redeemed().units()};
    if (Wide{primary.total_balance().units()} != expected) {
        report.violations.push_back({"primary-balance", "", "",
                                     fmt::format("contract balance {} but funding minus redemptions is {}",
                                                 primary.total_balance().units(), wide_str(expected))});
    }
    std::set<std::pair<Address, std::uint64_t>> seen;
    for (const auto& c : primary.redeemed_certificates()) {
        if (!seen.emplace(c.sender(), c.sequence().value()).second) {
            report.violations.push_back({"redeem-once", "", c.sender().hex(),
                                         fmt::format("sequence {} redeemed twice", c.sequence().value())});
        }
    }
    return report;
}

AuditReport audit_certificate_uniqueness(std::span<const Certificate> certificates)
{
    AuditReport report;
    CertificateSet distinct;
    distinct.add_all(certificates);
    report.certificates_checked = distinct.size();
    std::map<std::pair<Address, std::uint64_t>, std::vector<const Certificate*>> slots;
    for (const auto& c : distinct.all()) slots[{c.sender(), c.sequence().value()}].push_back(&c);
    for (const auto& [slot, group] : slots) {
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                std::set<std::string> first;
                for (const auto& s : group[i]->signatures) first.insert(s.authority);
                std::string both;
                for (const auto& s : group[j]->signatures) {
                    if (first.count(s.authority)) {
                        if (!both.empty()) both += ",";
                        both += s.authority;
                    }
                }
                report.violations.push_back({"certificate-uniqueness", both, slot.first.hex(),
                                             fmt::format("conflicting certificates at sequence {}", slot.second)});
            }
        }
    }
    return report;
}

AuditReport audit_system(std::span<const AuthorityState* const> shards, const PrimaryLedger& primary,
                         std::span<const Certificate> certificates)
{
    AuditReport report;
    for (const auto* shard : shards) report.merge(audit_authority(*shard, primary));

    CertificateSet distinct;
    distinct.add_all(certificates);
    std::set<Address> accounts;
    for (const auto& c : distinct.all()) {
        accounts.insert(c.sender());
        if (c.recipient().is_fastpay()) accounts.insert(c.recipient().address);
    }
    for (const auto& f : primary.fundings()) accounts.insert(f.recipient);
    for (const auto& a : accounts) report.merge(audit_account_safety(distinct.all(), primary, a));

    report.merge(audit_solvency(distinct.all(), primary));
    report.merge(audit_primary(primary));
    report.merge(audit_certificate_uniqueness(distinct.all()));
    report.certificates_checked = distinct.size();
    return report;
}

}  // namespace fastpay
