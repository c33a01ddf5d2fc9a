// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <mutex>

namespace zoomer {

// Token bucket refilled at `requests_per_minute` holding at most `burst`
// tokens. A non-positive rate disables limiting.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  explicit RateLimiter(double requests_per_minute, double burst = 1.0);

  // Blocks until a request may be sent.
  void acquire();
  // Non-blocking variant; returns false when the bucket is empty.
  bool try_acquire();

  double rate_per_minute() const noexcept { return rate_per_second_ * 60.0; }

 private:
  void refill(Clock::time_point now);

  double rate_per_second_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

}  // namespace zoomer
