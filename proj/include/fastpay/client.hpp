#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fastpay/committee.hpp"
#include "fastpay/messages.hpp"
#include "fastpay/primary_ledger.hpp"
#include "fastpay/runtime.hpp"

namespace fastpay {

struct RetryPolicy {
    Duration request_timeout = 250ms;
    Duration initial_backoff = 10ms;
    Duration max_backoff = 1s;
    // Total time one per-authority exchange may spend retrying.
    Duration budget = 30s;
    // Keep pushing a certificate to the remaining authorities after a quorum
    // settled it.
    bool background_confirmations = true;
};

// Persistent state of a correct client (checkpointed before every broadcast).
struct ClientState {
    KeyPair key;
    Address address;
    Committee committee;
    SequenceNumber next_sequence;
    std::optional<TransferOrder> pending_order;
    // Certificate formed for pending_order but not yet settled at a quorum.
    std::optional<Certificate> pending_certificate;
    std::vector<Certificate> sent;      // own certificates, index == sequence
    std::vector<Certificate> received;  // incoming certificates known to the owner
    Amount known_funding;

    static ClientState create(KeyPair key, Committee committee);

    nlohmann::json to_json() const;
    static ClientState from_json(const nlohmann::json& j);
};

class Client {
public:
    Client(ClientState state, AuthorityTransport& transport, const FundingSource* primary = nullptr,
           RetryPolicy policy = {});

    const ClientState& state() const noexcept { return state_; }
    const Address& address() const noexcept { return state_.address; }

    // Conservative: funding + received - settled outgoing - unsettled pending.
    Balance spendable_balance() const;

    // Signs the next order, gathers a quorum of votes, then settles the
    // certificate at a quorum. Refuses when an earlier order is unsettled or
    // the amount exceeds the spendable balance.
    Task<Certificate> transfer(Recipient recipient, Amount amount, std::optional<UserData> user_data = std::nullopt);

    // Drives the already-signed pending order to settlement (crash recovery).
    Task<Certificate> resume_pending();

    // Settles an incoming certificate at a quorum, catching authorities up on
    // the sender's earlier certificates where needed.
    Task<void> receive_certificate(Certificate certificate);

    // Pushes Primary funding, own and received certificates to every
    // authority so that the next transfer order is accepted.
    Task<void> sync_account();

    // Broadcasts a confirmation order until a quorum settled it.
    Task<void> confirm(Certificate certificate);

    Task<AccountInfoResponse> query_authority(std::size_t authority, AccountInfoRequest request);

    void set_checkpoint(std::function<void(const ClientState&)> fn) { checkpoint_ = std::move(fn); }
    void set_wait_for_all_votes(bool wait_all) { wait_for_all_votes_ = wait_all; }

    std::uint64_t requests_sent_to(std::size_t authority) const;
    std::uint64_t orders_signed() const noexcept { return orders_signed_; }
    Duration last_certificate_latency() const noexcept { return last_certificate_latency_; }
    Duration last_confirmation_latency() const noexcept { return last_confirmation_latency_; }

private:
    using Cancel = std::shared_ptr<CancelToken>;

    void save() const;
    std::size_t quorum() const { return state_.committee.quorum_threshold(); }
    std::size_t size() const { return state_.committee.size(); }

    // One request with retries; returns the reply envelope, or throws
    // QuorumUnreachable when the budget runs out or the token is cancelled.
    Task<Bytes> call(std::size_t authority, Address route, Bytes envelope, Cancel cancel, bool retry = true);
    // As call(), but turns ErrorReply envelopes into thrown FastPayErrors.
    Task<Bytes> call_checked(std::size_t authority, Address route, Bytes envelope, Cancel cancel,
                             bool retry = true);

    Task<SignedTransferOrder> vote_session(std::size_t authority, TransferOrder order, Cancel cancel);
    Task<Unit> confirm_session(std::size_t authority, Certificate certificate, Cancel cancel);
    Task<Unit> update_session(std::size_t authority, Cancel cancel);
    Task<void> confirm_once(std::size_t authority, const Certificate& certificate, Cancel cancel);
    Task<void> confirm_with_catch_up(std::size_t authority, Certificate certificate, Cancel cancel);
    Task<void> bring_up_to_date(std::size_t authority, Cancel cancel);
    Task<std::vector<Certificate>> fetch_chain(Address sender, std::uint64_t from, std::uint64_t to, Cancel cancel);
    Task<Certificate> fetch_certificate(Address sender, std::uint64_t sequence, Cancel cancel);
    Task<Certificate> drive_pending();
    Task<std::optional<Certificate>> recover_settled(TransferOrder order);

    void remember(const Certificate& certificate);
    [[noreturn]] void fail_quorum(const std::vector<std::exception_ptr>& errors, std::string_view phase) const;

    ClientState state_;
    AuthorityTransport& transport_;
    const FundingSource* primary_;
    RetryPolicy policy_;
    std::function<void(const ClientState&)> checkpoint_;
    bool wait_for_all_votes_ = false;

    std::map<std::pair<Address, std::uint64_t>, Certificate> certificate_cache_;
    std::vector<std::uint64_t> requests_sent_;
    std::uint64_t orders_signed_ = 0;
    std::size_t fetch_rotation_ = 0;
    Duration last_certificate_latency_{};
    Duration last_confirmation_latency_{};
};

}  // namespace fastpay
