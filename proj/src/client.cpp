#include "fastpay/client.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "fastpay/envelope.hpp"
#include "fastpay/json_io.hpp"

namespace fastpay {

ClientState ClientState::create(KeyPair key, Committee committee)
{
    auto address = address_of(key.public_key());
    return ClientState{std::move(key), address, std::move(committee), SequenceNumber{}, std::nullopt,
                       std::nullopt, {}, {}, Amount{}};
}

nlohmann::json ClientState::to_json() const
{
    nlohmann::json j;
    j["address"] = address.hex();
    j["seed"] = to_hex(key.seed());
    j["committee"] = committee_to_json(committee);
    j["next_sequence"] = next_sequence.value();
    j["pending_order"] = pending_order ? nlohmann::json(encode_hex(*pending_order)) : nlohmann::json();
    j["pending_certificate"] =
        pending_certificate ? nlohmann::json(encode_hex(*pending_certificate)) : nlohmann::json();
    j["sent"] = nlohmann::json::array();
    for (const auto& c : sent) j["sent"].push_back(encode_hex(c));
    j["received"] = nlohmann::json::array();
    for (const auto& c : received) j["received"].push_back(encode_hex(c));
    j["known_funding"] = known_funding.units();
    return j;
}

ClientState ClientState::from_json(const nlohmann::json& j)
{
    try {
        auto seed = array_from_hex<KeyPair::kSeedSize>(j.at("seed").get<std::string>());
        auto state = create(KeyPair::from_seed(seed), committee_from_json(j.at("committee")));
        state.next_sequence = SequenceNumber{j.at("next_sequence").get<std::uint64_t>()};
        if (!j.at("pending_order").is_null()) {
            state.pending_order = decode_hex<TransferOrder>(j.at("pending_order").get<std::string>());
        }
        if (j.contains("pending_certificate") && !j.at("pending_certificate").is_null()) {
            state.pending_certificate = decode_hex<Certificate>(j.at("pending_certificate").get<std::string>());
        }
        for (const auto& h : j.at("sent")) state.sent.push_back(decode_hex<Certificate>(h.get<std::string>()));
        for (const auto& h : j.at("received")) state.received.push_back(decode_hex<Certificate>(h.get<std::string>()));
        state.known_funding = Amount{j.at("known_funding").get<std::uint64_t>()};
        ensure(state.sent.size() == state.next_sequence.value(), ErrorCode::ConfigError,
               "wallet: sent certificates do not match next_sequence");
        return state;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, fmt::format("malformed wallet file: {}", e.what()));
    }
}

Client::Client(ClientState state, AuthorityTransport& transport, const FundingSource* primary, RetryPolicy policy)
    : state_(std::move(state)), transport_(transport), primary_(primary), policy_(policy),
      requests_sent_(state_.committee.size(), 0)
{
    ensure(transport_.authority_count() == state_.committee.size(), ErrorCode::ConfigError,
           "transport and committee disagree on the number of authorities");
    for (const auto& c : state_.sent) remember(c);
    for (const auto& c : state_.received) remember(c);
}

void Client::save() const
{
    if (checkpoint_) checkpoint_(state_);
}

void Client::remember(const Certificate& certificate)
{
    certificate_cache_.insert_or_assign({certificate.sender(), certificate.sequence().value()}, certificate);
}

std::uint64_t Client::requests_sent_to(std::size_t authority) const
{
    return requests_sent_.at(authority);
}

Balance Client::spendable_balance() const
{
    auto balance = Balance::from(state_.known_funding);
    for (const auto& c : state_.received) balance = balance.checked_add(c.amount());
    for (const auto& c : state_.sent) balance = balance.checked_sub(c.amount());
    if (state_.pending_order) balance = balance.checked_sub(state_.pending_order->amount);
    return balance;
}

void Client::fail_quorum(const std::vector<std::exception_ptr>& errors, std::string_view phase) const
{
    std::string diagnostics;
    std::optional<ErrorCode> rejection;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        std::string what;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const FastPayError& e) {
            what = fmt::format("{} ({})", error_name(e.code()), e.what());
            if (e.code() != ErrorCode::QuorumUnreachable && !rejection) rejection = e.code();
        } catch (const std::exception& e) {
            what = e.what();
        }
        if (!diagnostics.empty()) diagnostics += "; ";
        diagnostics += fmt::format("{}: {}", state_.committee.authorities()[i].name, what);
    }
    auto message = fmt::format("{} did not reach a quorum: {}", phase, diagnostics);
    if (rejection) {
        fail(ErrorCode::AuthorityRejection, message, static_cast<std::uint64_t>(*rejection));
    }
    fail(ErrorCode::QuorumUnreachable, message);
}

// --- per-authority exchanges -------------------------------------------------

Task<Bytes> Client::call(std::size_t authority, Address route, Bytes envelope, Cancel cancel, bool retry)
{
    auto& executor = transport_.executor();
    auto deadline = executor.now() + policy_.budget;
    auto backoff = policy_.initial_backoff;
    const auto& name = state_.committee.authorities()[authority].name;
    for (;;) {
        if (cancel && cancel->cancelled) {
            fail(ErrorCode::QuorumUnreachable, fmt::format("request to {} cancelled", name));
        }
        ++requests_sent_[authority];
        auto reply = co_await request(transport_, authority, route, envelope, policy_.request_timeout);
        if (reply) co_return std::move(*reply);
        if (!retry || executor.now() + backoff >= deadline) {
            fail(ErrorCode::QuorumUnreachable, fmt::format("{} did not answer", name));
        }
        co_await sleep_for(executor, backoff);
        backoff = std::min(backoff * 2, policy_.max_backoff);
    }
}

Task<Bytes> Client::call_checked(std::size_t authority, Address route, Bytes envelope, Cancel cancel, bool retry)
{
    auto reply = co_await call(authority, route, std::move(envelope), std::move(cancel), retry);
    auto opened = open_envelope(reply);
    if (opened.kind == MessageKind::ErrorReply) {
        auto error = decode<ErrorReply>(opened.payload);
        throw FastPayError(error.code, error.message, error.detail);
    }
    co_return reply;
}

namespace {

bool worth_updating(const FastPayError& e, const TransferOrder& order)
{
    switch (e.code()) {
    case ErrorCode::InsufficientBalance:
    case ErrorCode::UnknownSender:
    case ErrorCode::PreviousTransferPending:
        return true;
    case ErrorCode::UnexpectedSequence:
        return e.detail() < order.sequence.value();
    default:
        return false;
    }
}

}  // namespace

Task<SignedTransferOrder> Client::vote_session(std::size_t authority, TransferOrder order, Cancel cancel)
{
    const auto& name = state_.committee.authorities()[authority].name;
    for (int attempt = 0;; ++attempt) {
        bool update = false;
        try {
            auto envelope = seal(order);
            auto reply = co_await call_checked(authority, order.sender, std::move(envelope), cancel);
            auto vote = open_as<SignedTransferOrder>(open_envelope(reply));
            ensure(vote.order == order && vote.authority == name, ErrorCode::InvalidVote,
                   "vote does not match the order sent");
            vote.check(state_.committee);
            co_return vote;
        } catch (const FastPayError& e) {
            if (attempt > 0 || !worth_updating(e, order)) throw;
            update = true;
        }
        if (update) co_await bring_up_to_date(authority, cancel);
    }
}

Task<void> Client::confirm_once(std::size_t authority, const Certificate& certificate, Cancel cancel)
{
    // GCC 11 mishandles non-trivial temporaries inside co_await expressions,
    // so arguments are built into locals first throughout this file.
    ConfirmationOrder confirmation{certificate};
    auto envelope = seal(confirmation);
    co_await call_checked(authority, certificate.sender(), std::move(envelope), cancel);
}

Task<void> Client::confirm_with_catch_up(std::size_t authority, Certificate certificate, Cancel cancel)
{
    std::uint64_t k = 0;
    try {
        co_await confirm_once(authority, certificate, cancel);
        co_return;
    } catch (const FastPayError& e) {
        if (e.code() != ErrorCode::MissingEarlierCertificates) throw;
        k = e.detail();
    }
    auto n = certificate.sequence().value();
    ensure(k < n, ErrorCode::AuthorityRejection, "authority reported a missing sequence that is not earlier",
           static_cast<std::uint64_t>(ErrorCode::MissingEarlierCertificates));
    auto chain = co_await fetch_chain(certificate.sender(), k, n, cancel);
    for (const auto& earlier : chain) {
        co_await confirm_once(authority, earlier, cancel);
    }
    co_await confirm_once(authority, certificate, cancel);
}

Task<std::vector<Certificate>> Client::fetch_chain(Address sender, std::uint64_t from, std::uint64_t to,
                                                    Cancel cancel)
{
    // Downloaded newest first, returned oldest first.
    std::vector<Certificate> chain;
    for (auto s = to; s-- > from;) {
        chain.push_back(co_await fetch_certificate(sender, s, cancel));
    }
    std::reverse(chain.begin(), chain.end());
    co_return chain;
}

Task<Certificate> Client::fetch_certificate(Address sender, std::uint64_t sequence, Cancel cancel)
{
    if (auto it = certificate_cache_.find({sender, sequence}); it != certificate_cache_.end()) {
        co_return it->second;
    }
    AccountInfoRequest query;
    query.account = sender;
    query.certificate_query = SequenceNumber{sequence};
    auto envelope = seal(query);
    constexpr int kRounds = 3;
    auto backoff = policy_.initial_backoff;
    for (int round = 0; round < kRounds; ++round) {
        for (std::size_t step = 0; step < size(); ++step) {
            auto j = (fetch_rotation_ + step) % size();
            std::optional<Certificate> found;
            try {
                auto reply = co_await call_checked(j, sender, envelope, cancel, false);
                auto info = open_as<AccountInfoResponse>(open_envelope(reply));
                if (info.requested_certificate && info.requested_certificate->sender() == sender &&
                    info.requested_certificate->sequence().value() == sequence &&
                    is_valid_certificate(*info.requested_certificate, state_.committee)) {
                    found = std::move(info.requested_certificate);
                }
            } catch (const FastPayError&) {
                if (cancel && cancel->cancelled) throw;
            }
            if (found) {
                remember(*found);
                co_return std::move(*found);
            }
        }
        fetch_rotation_ = (fetch_rotation_ + 1) % size();
        co_await sleep_for(transport_.executor(), backoff);
        backoff = std::min(backoff * 2, policy_.max_backoff);
    }
    fail(ErrorCode::CertificateNotFound,
         fmt::format("no authority served certificate {}#{}", sender.short_hex(), sequence), sequence);
}

Task<void> Client::bring_up_to_date(std::size_t authority, Cancel cancel)
{
    const auto& me = state_.address;
    std::optional<AccountInfoResponse> info;
    try {
        AccountInfoRequest request;
        request.account = me;
        auto envelope = seal(request);
        auto reply = co_await call_checked(authority, me, std::move(envelope), cancel);
        info = open_as<AccountInfoResponse>(open_envelope(reply));
    } catch (const FastPayError& e) {
        if (e.code() != ErrorCode::UnknownAccount) throw;
    }

    // 1. Primary funding not yet seen by the authority's shard.
    if (primary_) {
        auto last = info ? info->last_transaction : 0;
        for (const auto& sync : primary_->synchronization_orders_for(me)) {
            if (sync.transaction_index <= last) continue;
            auto envelope = seal(sync);
            co_await call_checked(authority, sync.recipient, std::move(envelope), cancel);
        }
    }

    // 2. Own certificates the authority has not settled.
    auto known = info ? info->next_sequence.value() : 0;
    for (auto s = known; s < state_.sent.size(); ++s) {
        co_await confirm_with_catch_up(authority, state_.sent[s], cancel);
    }

    // 3. Incoming certificates.
    auto received = state_.received;
    for (const auto& c : received) {
        co_await confirm_with_catch_up(authority, c, cancel);
    }
}

Task<Unit> Client::confirm_session(std::size_t authority, Certificate certificate, Cancel cancel)
{
    co_await confirm_with_catch_up(authority, std::move(certificate), std::move(cancel));
    co_return Unit{};
}

Task<Unit> Client::update_session(std::size_t authority, Cancel cancel)
{
    co_await bring_up_to_date(authority, std::move(cancel));
    co_return Unit{};
}

// --- operations ------------------------------------------------------------

Task<Certificate> Client::transfer(Recipient recipient, Amount amount, std::optional<UserData> user_data)
{
    ensure(!state_.pending_order, ErrorCode::PreviousTransferPending,
           "an earlier transfer is unsettled; resume it first", state_.next_sequence.value());
    ensure(!amount.is_zero(), ErrorCode::ZeroAmount, "transfer amount must be positive");
    if (primary_) state_.known_funding = primary_->funding_of(state_.address);
    ensure(spendable_balance().covers(amount), ErrorCode::InsufficientBalance,
           fmt::format("amount {} exceeds spendable balance {}", amount.units(), spendable_balance().units()));

    state_.pending_order = TransferOrder::create(state_.key, recipient, amount, state_.next_sequence, user_data);
    ++orders_signed_;
    save();
    co_return co_await drive_pending();
}

Task<Certificate> Client::resume_pending()
{
    ensure(state_.pending_order.has_value(), ErrorCode::InvalidRequest, "no pending transfer to resume");
    co_return co_await drive_pending();
}

Task<std::optional<Certificate>> Client::recover_settled(TransferOrder order)
{
    try {
        auto cert = co_await fetch_certificate(order.sender, order.sequence.value(), nullptr);
        if (cert.order == order) co_return cert;
    } catch (const FastPayError&) {
    }
    co_return std::nullopt;
}

Task<Certificate> Client::drive_pending()
{
    auto order = *state_.pending_order;
    auto& executor = transport_.executor();

    if (!state_.pending_certificate) {
        auto start = executor.now();
        auto cancel = std::make_shared<CancelToken>();
        std::vector<Task<SignedTransferOrder>> sessions;
        for (std::size_t i = 0; i < size(); ++i) sessions.push_back(vote_session(i, order, cancel));

        auto n = size();
        auto q = quorum();
        auto wait_all = wait_for_all_votes_;
        std::function<bool(const Gathered<SignedTransferOrder>&)> enough =
            [n, q, wait_all](const Gathered<SignedTransferOrder>& g) {
                if (wait_all) return g.successes + g.failures == n;
                return g.successes >= q || g.failures > n - q;
            };
        auto awaiter = gather_until<SignedTransferOrder>(executor, std::move(sessions), std::move(enough), cancel, true);
        auto gathered = co_await std::move(awaiter);

        std::vector<SignedTransferOrder> votes;
        for (auto& r : gathered.results) {
            if (r) votes.push_back(std::move(*r));
        }
        if (votes.size() >= q) {
            state_.pending_certificate = make_certificate(order, votes, state_.committee);
        } else if (auto settled = co_await recover_settled(order)) {
            // The certificate was formed before a crash and already settled
            // at some authorities, which then refuse to vote again.
            state_.pending_certificate = std::move(settled);
        } else {
            fail_quorum(gathered.errors, "vote collection");
        }
        last_certificate_latency_ = executor.now() - start;
        remember(*state_.pending_certificate);
        save();
    }

    auto certificate = *state_.pending_certificate;
    co_await confirm(certificate);

    state_.sent.push_back(certificate);
    state_.next_sequence = state_.next_sequence.next();
    state_.pending_order.reset();
    state_.pending_certificate.reset();
    save();
    co_return certificate;
}

Task<void> Client::confirm(Certificate certificate)
{
    auto& executor = transport_.executor();
    auto start = executor.now();
    auto cancel = std::make_shared<CancelToken>();
    std::vector<Task<Unit>> sessions;
    for (std::size_t i = 0; i < size(); ++i) sessions.push_back(confirm_session(i, certificate, cancel));

    auto n = size();
    auto q = quorum();
    std::function<bool(const Gathered<Unit>&)> enough = [n, q](const Gathered<Unit>& g) {
        return g.successes >= q || g.failures > n - q;
    };
    auto awaiter = gather_until<Unit>(executor, std::move(sessions), std::move(enough), cancel,
                                      !policy_.background_confirmations);
    auto gathered = co_await std::move(awaiter);
    if (gathered.successes < q) {
        cancel->cancelled = true;
        fail_quorum(gathered.errors, "confirmation");
    }
    last_confirmation_latency_ = executor.now() - start;
}

Task<void> Client::receive_certificate(Certificate certificate)
{
    try {
        check_certificate(certificate, state_.committee);
    } catch (const FastPayError& e) {
        fail(ErrorCode::InvalidCertificate, fmt::format("incoming certificate rejected: {}", e.what()));
    }
    ensure(certificate.recipient().is_fastpay() && certificate.recipient().address == state_.address,
           ErrorCode::InvalidRequest, "certificate is not addressed to this account");
    remember(certificate);
    co_await confirm(certificate);

    auto same = [&](const Certificate& c) {
        return c.sender() == certificate.sender() && c.sequence() == certificate.sequence();
    };
    if (std::none_of(state_.received.begin(), state_.received.end(), same)) {
        state_.received.push_back(certificate);
        save();
    }
}

Task<void> Client::sync_account()
{
    if (primary_) state_.known_funding = primary_->funding_of(state_.address);
    auto cancel = std::make_shared<CancelToken>();
    std::vector<Task<Unit>> sessions;
    for (std::size_t i = 0; i < size(); ++i) sessions.push_back(update_session(i, cancel));

    auto n = size();
    auto q = quorum();
    std::function<bool(const Gathered<Unit>&)> enough = [n, q](const Gathered<Unit>& g) {
        return g.successes >= q || g.failures > n - q;
    };
    auto awaiter = gather_until<Unit>(transport_.executor(), std::move(sessions), std::move(enough), cancel, false);
    auto gathered = co_await std::move(awaiter);
    if (gathered.successes < q) {
        cancel->cancelled = true;
        fail_quorum(gathered.errors, "account synchronization");
    }
    save();
}

Task<AccountInfoResponse> Client::query_authority(std::size_t authority, AccountInfoRequest request)
{
    ensure(authority < size(), ErrorCode::UnknownAuthority, "authority index out of range");
    auto route = request.account;
    auto envelope = seal(request);
    auto reply = co_await call_checked(authority, route, std::move(envelope), nullptr);
    co_return open_as<AccountInfoResponse>(open_envelope(reply));
}

}  // namespace fastpay
