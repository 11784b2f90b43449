#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spdelab {

/// Evaluate `fn(ctx, i)` for i in [0, count) on up to `threads` workers and
/// return the results indexed by i. `make_ctx()` builds one per-worker
/// context (scratch buffers). Result order never depends on scheduling, so
/// any reduction over the returned vector is deterministic.
template <class MakeCtx, class Fn>
auto parallel_map(std::size_t count, int threads, MakeCtx make_ctx, Fn fn) {
    using Ctx = decltype(make_ctx());
    using R = decltype(fn(std::declval<Ctx&>(), std::size_t{}));
    std::vector<R> out(count);
    const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(std::max<std::size_t>(count, 1))));
    if (workers <= 1) {
        auto ctx = make_ctx();
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(ctx, i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&] {
        try {
            auto ctx = make_ctx();
            for (std::size_t i = next++; i < count; i = next++) out[i] = fn(ctx, i);
        } catch (...) {
            std::lock_guard lk(err_mu);
            if (!err) err = std::current_exception();
            next = count;
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    return out;
}

}  // namespace spdelab
