#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace calib {

/// Evaluate `eval(i)` for i in [0, n) on `workers` threads and feed results
/// to `consume(i, r)` strictly in index order on the calling thread, so file
/// output stays deterministic regardless of scheduling.
template <class Eval, class Consume>
void parallel_map_ordered(std::size_t n, std::size_t workers, Eval eval,
                          Consume consume, std::size_t chunk = 64) {
    if (n == 0) return;
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) consume(i, eval(i));
        return;
    }
    using R = decltype(eval(std::size_t{0}));
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<std::optional<std::vector<R>>> done(nchunks);
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            std::size_t begin = c * chunk, end = std::min(n, begin + chunk);
            std::vector<R> out;
            out.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) out.push_back(eval(i));
            {
                std::lock_guard lock(mu);
                done[c] = std::move(out);
            }
            cv.notify_one();
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);

    for (std::size_t c = 0; c < nchunks; ++c) {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return done[c].has_value(); });
        std::vector<R> out = std::move(*done[c]);
        done[c].reset();
        lock.unlock();
        std::size_t begin = c * chunk;
        for (std::size_t i = 0; i < out.size(); ++i) consume(begin + i, out[i]);
    }
    for (auto& t : pool) t.join();
}

}  // namespace calib
