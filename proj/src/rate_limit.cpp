#include "poda/rate_limit.hpp"

#include <algorithm>
#include <thread>

#include "poda/error.hpp"

namespace poda::llm {

void SteadyClock::sleep_until(time_point t) { std::this_thread::sleep_until(t); }

SlidingWindowLimiter::SlidingWindowLimiter(int limit, std::chrono::nanoseconds window, std::shared_ptr<Clock> clock)
    : limit_(limit), window_(window), clock_(std::move(clock)) {
  if (limit_ < 1) fail(ErrorCode::ConfigError, "requests_per_minute must be positive");
  if (!clock_) clock_ = std::make_shared<SteadyClock>();
}

Clock::time_point SlidingWindowLimiter::acquire() {
  // Callers queue on the mutex, which also serializes the sleeps; admission
  // order is therefore FIFO with respect to lock acquisition.
  std::lock_guard lock(mu_);
  auto now = clock_->now();
  if (static_cast<int>(admitted_.size()) == limit_) {
    auto earliest_ok = admitted_.front() + window_;
    if (now < earliest_ok) {
      clock_->sleep_until(earliest_ok);
      now = std::max(clock_->now(), earliest_ok);
    }
    admitted_.pop_front();
  }
  admitted_.push_back(now);
  return now;
}

ConcurrencyGate::ConcurrencyGate(int max_in_flight) : max_(max_in_flight) {
  if (max_ < 1) fail(ErrorCode::ConfigError, "max_concurrency must be positive");
}

void ConcurrencyGate::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < max_; });
  ++in_flight_;
  max_observed_ = std::max(max_observed_, in_flight_);
}

void ConcurrencyGate::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int ConcurrencyGate::max_observed() const {
  std::lock_guard lock(mu_);
  return max_observed_;
}

}  // namespace poda::llm
