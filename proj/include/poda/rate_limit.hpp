#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <memory>
#include <mutex>

namespace poda::llm {

class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point t) = 0;
};

class SteadyClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_until(time_point t) override;
};

// Admits at most `limit` acquisitions in any window of length `window`.
// Keeps the start times of the last `limit` admissions, so the bound is
// exact rather than the burst-tolerant bound of a refilling bucket.
class SlidingWindowLimiter {
 public:
  SlidingWindowLimiter(int limit, std::chrono::nanoseconds window, std::shared_ptr<Clock> clock);

  // Blocks until admission; returns the admission time.
  Clock::time_point acquire();

 private:
  int limit_;
  std::chrono::nanoseconds window_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> admitted_;
};

// Counting semaphore with a runtime bound.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int max_in_flight);

  void acquire();
  void release();
  int max_observed() const;

  class Lease {
   public:
    explicit Lease(ConcurrencyGate& g) : g_(g) { g_.acquire(); }
    ~Lease() { g_.release(); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;

   private:
    ConcurrencyGate& g_;
  };

 private:
  int max_;
  int in_flight_ = 0;
  int max_observed_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace poda::llm
