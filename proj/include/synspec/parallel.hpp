#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace synspec {

namespace detail {

// Fixed-size worker team. Work is split into contiguous index ranges, one per
// worker, so every output element is produced by exactly one thread and
// results never depend on the thread count.
class ThreadTeam {
 public:
  explicit ThreadTeam(std::size_t n_threads) { resize(n_threads); }
  ~ThreadTeam() { stop(); }

  ThreadTeam(const ThreadTeam&) = delete;
  ThreadTeam& operator=(const ThreadTeam&) = delete;

  std::size_t size() const noexcept { return workers_.size() + 1; }

  void resize(std::size_t n_threads) {
    stop();
    n_threads = std::max<std::size_t>(1, n_threads);
    shutdown_ = false;
    generation_ = 0;
    for (std::size_t i = 1; i < n_threads; ++i) {
      workers_.emplace_back([this, i] { worker_loop(i); });
    }
  }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    const std::size_t teams = std::min(size(), n);
    if (teams <= 1 || busy_.exchange(true)) {
      if (n > 0) body(0, n);
      return;
    }
    {
      std::unique_lock lock(mutex_);
      body_ = &body;
      total_ = n;
      active_ = teams;
      pending_ = teams - 1;
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    std::exception_ptr own;
    try {
      run_slice(0);
    } catch (...) {
      own = std::current_exception();
    }
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    body_ = nullptr;
    auto err = own ? own : error_;
    busy_ = false;
    if (err) std::rethrow_exception(err);
  }

 private:
  void run_slice(std::size_t index) {
    const std::size_t begin = total_ * index / active_;
    const std::size_t end = total_ * (index + 1) / active_;
    if (begin < end) (*body_)(begin, end);
  }

  void worker_loop(std::size_t index) {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
        if (index >= active_) continue;
      }
      std::exception_ptr err;
      try {
        run_slice(index);
      } catch (...) {
        err = std::current_exception();
      }
      std::unique_lock lock(mutex_);
      if (err && !error_) error_ = err;
      if (--pending_ == 0) done_.notify_one();
    }
  }

  void stop() {
    {
      std::unique_lock lock(mutex_);
      shutdown_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::size_t total_ = 0;
  std::size_t active_ = 0;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool shutdown_ = false;
  std::atomic<bool> busy_{false};
  std::exception_ptr error_;
};

inline ThreadTeam& team() {
  static ThreadTeam instance(std::max(1u, std::thread::hardware_concurrency()));
  return instance;
}

}  // namespace detail

/// Number of threads used by parallel_for. Defaults to the core count.
inline std::size_t num_threads() { return detail::team().size(); }

inline void set_num_threads(std::size_t n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (n != detail::team().size()) detail::team().resize(n);
}

/// Calls body(begin, end) on disjoint contiguous ranges covering [0, n).
/// Nested calls run inline on the calling thread.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  detail::team().run(n, body);
}

}  // namespace synspec
