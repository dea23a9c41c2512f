#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace eqr {

/// Counting semaphore with a runtime limit; bounds in-flight provider calls.
class PermitPool {
 public:
  explicit PermitPool(std::size_t permits) : available_(std::max<std::size_t>(permits, 1)) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

  class Permit {
   public:
    explicit Permit(PermitPool& pool) : pool_(pool) { pool_.acquire(); }
    ~Permit() { pool_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    PermitPool& pool_;
  };

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t available_;
};

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Splits [0, count) into at most `workers` contiguous blocks and runs
/// fn(begin, end) for each; the first exception is rethrown.
template <typename Fn>
void parallel_blocks(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t block = (count + workers - 1) / workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(count, begin + block);
    if (begin >= end) break;
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace eqr
