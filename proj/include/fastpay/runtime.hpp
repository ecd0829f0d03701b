#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>

#include "fastpay/task.hpp"
#include "fastpay/types.hpp"

namespace fastpay {

using Duration = std::chrono::nanoseconds;
using namespace std::chrono_literals;

// Single-threaded event loop. The simulator implements it over virtual time,
// the UDP client over poll(2) and the steady clock.
class Executor {
public:
    virtual ~Executor() = default;

    virtual Duration now() const = 0;
    virtual void post_after(Duration delay, std::function<void()> fn) = 0;
    // Runs events until `done()` holds or no event is left. Returns done().
    virtual bool run_until(const std::function<bool()>& done) = 0;
};

// Request/reply access to the committee from a client's point of view.
class AuthorityTransport {
public:
    virtual ~AuthorityTransport() = default;

    virtual Executor& executor() = 0;
    virtual std::size_t authority_count() const = 0;

    // One attempt: delivers `envelope` to the shard of `authority` responsible
    // for `route`. `on_reply` runs exactly once, from the event loop, with the
    // reply envelope or nullopt on timeout.
    virtual void send_request(std::size_t authority, const Address& route, Bytes envelope, Duration timeout,
                              std::function<void(std::optional<Bytes>)> on_reply) = 0;
};

struct SleepAwaiter {
    Executor& executor;
    Duration delay;

    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h) { executor.post_after(delay, [h] { h.resume(); }); }
    void await_resume() const noexcept {}
};

inline SleepAwaiter sleep_for(Executor& executor, Duration delay)
{
    return {executor, delay};
}

struct RequestAwaiter {
    AuthorityTransport& transport;
    std::size_t authority;
    Address route;
    Bytes envelope;
    Duration timeout;
    std::optional<Bytes> reply;

    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<> h)
    {
        transport.send_request(authority, route, std::move(envelope), timeout, [this, h](std::optional<Bytes> r) {
            reply = std::move(r);
            h.resume();
        });
    }
    std::optional<Bytes> await_resume() { return std::move(reply); }
};

inline RequestAwaiter request(AuthorityTransport& transport, std::size_t authority, const Address& route,
                              Bytes envelope, Duration timeout)
{
    return {transport, authority, route, std::move(envelope), timeout, std::nullopt};
}

// Shared flag telling background sessions to stop issuing new requests.
struct CancelToken {
    bool cancelled = false;
};

template <typename R>
struct Gathered {
    std::vector<std::optional<R>> results;
    std::vector<std::exception_ptr> errors;
    std::size_t successes = 0;
    std::size_t failures = 0;
};

namespace detail {

template <typename R>
struct GatherState {
    Gathered<R> gathered;
    std::size_t finished = 0;
    std::size_t total = 0;
    bool ready = false;
    std::coroutine_handle<> waiter;
    std::function<bool(const Gathered<R>&)> enough;
    std::shared_ptr<CancelToken> cancel;
    bool cancel_when_ready = false;
};

template <typename R>
struct GatherAwaiter {
    std::shared_ptr<GatherState<R>> state;

    bool await_ready() const noexcept { return state->ready; }
    void await_suspend(std::coroutine_handle<> h) { state->waiter = h; }
    Gathered<R> await_resume() const { return state->gathered; }
};

}  // namespace detail

// Starts all tasks concurrently; awaiting the result resumes as soon as `enough` holds (or all
// tasks finished). Unfinished tasks keep running in the background; when
// `cancel_when_ready` is set, `cancel` is raised at that point so they wind
// down after their in-flight request.
template <typename R>
detail::GatherAwaiter<R> gather_until(Executor& executor, std::vector<Task<R>> tasks,
                               std::function<bool(const Gathered<R>&)> enough,
                               std::shared_ptr<CancelToken> cancel = nullptr, bool cancel_when_ready = false)
{
    auto state = std::make_shared<detail::GatherState<R>>();
    state->total = tasks.size();
    state->gathered.results.resize(tasks.size());
    state->gathered.errors.resize(tasks.size());
    state->enough = std::move(enough);
    state->cancel = std::move(cancel);
    state->cancel_when_ready = cancel_when_ready;
    if (tasks.empty()) {
        state->ready = true;
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        spawn<R>(std::move(tasks[i]), [state, i, &executor](Outcome<R> outcome) {
            auto& g = state->gathered;
            if (outcome.ok()) {
                g.results[i] = std::move(*outcome.value);
                ++g.successes;
            } else {
                g.errors[i] = outcome.error;
                ++g.failures;
            }
            ++state->finished;
            if (state->ready) {
                return;
            }
            if (state->enough(g) || state->finished == state->total) {
                state->ready = true;
                if (state->cancel_when_ready && state->cancel) {
                    state->cancel->cancelled = true;
                }
                if (auto w = state->waiter) {
                    executor.post_after(Duration::zero(), [w] { w.resume(); });
                }
            }
        });
    }
    return detail::GatherAwaiter<R>{state};
}

// Drives the executor until `task` finishes and returns its result.
template <typename T>
T sync_wait(Executor& executor, Task<T> task)
{
    std::optional<Outcome<T>> result;
    spawn<T>(std::move(task), [&result](Outcome<T> o) { result = std::move(o); });
    executor.run_until([&] { return result.has_value(); });
    if (!result) {
        throw std::logic_error("event loop ran dry before the task completed");
    }
    if (result->error) {
        std::rethrow_exception(result->error);
    }
    if constexpr (!std::is_void_v<T>) {
        return std::move(*result->value);
    }
}

}  // namespace fastpay
