#pragma once

#include <algorithm>
#include <chrono>
#include <mutex>
#include <random>
#include <thread>

namespace absieve {

/// Spaces request starts at least 60/R seconds apart across all threads.
/// Each caller reserves the next free slot under the lock and sleeps outside it.
class RateLimiter {
  public:
    using clock = std::chrono::steady_clock;

    explicit RateLimiter(int requests_per_minute)
        : interval_(std::chrono::duration_cast<clock::duration>(std::chrono::minutes(1)) / std::max(1, requests_per_minute)) {}

    void acquire() {
        clock::time_point slot;
        {
            std::lock_guard lock(mutex_);
            const auto now = clock::now();
            slot = started_ ? std::max(now, last_ + interval_) : now;
            last_ = slot;
            started_ = true;
        }
        std::this_thread::sleep_until(slot);
    }

    [[nodiscard]] clock::duration interval() const noexcept { return interval_; }

  private:
    clock::duration interval_;
    std::mutex mutex_;
    clock::time_point last_{};
    bool started_ = false;
};

/// Exponential backoff with full jitter: a uniform draw from
/// [0, min(cap, base * 2^retry)].
inline std::chrono::milliseconds backoff_delay(std::chrono::milliseconds base, int retry,
                                               std::chrono::milliseconds cap = std::chrono::seconds(60)) {
    if (base.count() <= 0) return std::chrono::milliseconds(0);
    const double ceiling = std::min(static_cast<double>(cap.count()),
                                    static_cast<double>(base.count()) * static_cast<double>(1ULL << std::min(retry, 30)));
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> dist(0.0, ceiling);
    return std::chrono::milliseconds(static_cast<long long>(dist(rng)));
}

} // namespace absieve
