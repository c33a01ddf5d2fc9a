// SPDX-License-Identifier: Apache-2.0

#include "zoomer/rate_limiter.hpp"

#include <algorithm>
#include <thread>

namespace zoomer {

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : rate_per_second_(std::max(0.0, requests_per_minute) / 60.0),
      capacity_(std::max(1.0, burst)),
      tokens_(capacity_),
      last_(Clock::now()) {}

void RateLimiter::refill(Clock::time_point now) {
  const std::chrono::duration<double> elapsed = now - last_;
  tokens_ = std::min(capacity_, tokens_ + elapsed.count() * rate_per_second_);
  last_ = now;
}

bool RateLimiter::try_acquire() {
  if (rate_per_second_ <= 0) return true;
  std::lock_guard lock(mutex_);
  refill(Clock::now());
  if (tokens_ < 1.0) return false;
  tokens_ -= 1.0;
  return true;
}

void RateLimiter::acquire() {
  if (rate_per_second_ <= 0) return;
  for (;;) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mutex_);
      refill(Clock::now());
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_second_);
    }
    std::this_thread::sleep_for(wait);
  }
}

}  // namespace zoomer
