#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace oasflow {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Tensor/argument shape violations; message names the offending axis.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated call contracts (non-scalar loss, empty mask, diverged training...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed files: bad magic, truncated payload, unsupported version.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// splitmix64 underneath so that streams are reproducible across platforms and
// standard-library versions (std:: distributions are not pinned by the
// standard). Box-Muller for normals.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [lo, hi] inclusive.
  int64_t randint(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Derives an independent stream; useful for per-step / per-sample seeding.
  static uint64_t mix(uint64_t seed, uint64_t stream) {
    Rng r(seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL));
    return r.next_u64();
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Thread pool
//
// Kernels parallelize over independent output slices only, so results are
// bit-identical for any worker count. OASFLOW_THREADS caps the pool.
// ---------------------------------------------------------------------------

namespace detail {

class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int thread_count() const { return thread_count_; }

  void set_thread_count(int n) {
    std::lock_guard<std::mutex> lk(config_mutex_);
    stop_workers();
    thread_count_ = n < 1 ? 1 : n;
    start_workers();
  }

  /// Runs fn(begin, end) over [0, total) split into contiguous chunks.
  void run(int64_t total, const std::function<void(int64_t, int64_t)>& fn) {
    if (total <= 0) return;
    const int nt = thread_count_;
    if (nt <= 1 || total == 1 || in_worker_) {
      fn(0, total);
      return;
    }
    std::lock_guard<std::mutex> lk(config_mutex_);
    const int chunks = static_cast<int>(std::min<int64_t>(nt, total));
    const int64_t per = (total + chunks - 1) / chunks;
    {
      std::unique_lock<std::mutex> wl(work_mutex_);
      job_fn_ = &fn;
      job_total_ = total;
      job_per_ = per;
      job_next_ = 0;
      pending_ = chunks;
      generation_++;
    }
    work_cv_.notify_all();
    // The caller participates too.
    worker_loop_once();
    std::unique_lock<std::mutex> wl(work_mutex_);
    done_cv_.wait(wl, [&] { return pending_ == 0; });
    job_fn_ = nullptr;
  }

 private:
  ThreadPool() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("OASFLOW_THREADS")) {
      const int cap = std::atoi(env);
      if (cap >= 1 && cap < n) n = cap;
    }
    thread_count_ = n;
    start_workers();
  }

  ~ThreadPool() { stop_workers(); }

  void start_workers() {
    stopping_ = false;
    for (int i = 1; i < thread_count_; ++i) {
      workers_.emplace_back([this] {
        in_worker_ = true;
        for (;;) {
          std::unique_lock<std::mutex> wl(work_mutex_);
          const uint64_t seen = my_generation_;
          work_cv_.wait(wl, [&] { return stopping_ || generation_ != seen; });
          if (stopping_) return;
          my_generation_ = generation_;
          wl.unlock();
          worker_loop_once();
        }
      });
    }
  }

  void stop_workers() {
    {
      std::unique_lock<std::mutex> wl(work_mutex_);
      stopping_ = true;
    }
    work_cv_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  void worker_loop_once() {
    for (;;) {
      int64_t begin;
      {
        std::unique_lock<std::mutex> wl(work_mutex_);
        if (job_fn_ == nullptr || job_next_ >= job_total_) return;
        begin = job_next_;
        job_next_ += job_per_;
      }
      const int64_t end = std::min<int64_t>(begin + job_per_, job_total_);
      (*job_fn_)(begin, end);
      {
        std::unique_lock<std::mutex> wl(work_mutex_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex config_mutex_;
  std::mutex work_mutex_;
  std::condition_variable work_cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  int64_t job_total_ = 0;
  int64_t job_per_ = 0;
  int64_t job_next_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stopping_ = false;
  int thread_count_ = 1;
  static thread_local bool in_worker_;
  static thread_local uint64_t my_generation_;
};

inline thread_local bool ThreadPool::in_worker_ = false;
inline thread_local uint64_t ThreadPool::my_generation_ = 0;

}  // namespace detail

/// Current worker-thread cap (1 means serial).
inline int thread_count() { return detail::ThreadPool::instance().thread_count(); }

/// Overrides the pool size (tests use this to verify thread-count invariance).
inline void set_thread_count(int n) { detail::ThreadPool::instance().set_thread_count(n); }

/// Parallel loop over [0, total); fn receives contiguous [begin, end) chunks.
/// Each index must own its outputs: no cross-index reductions.
template <typename Fn>
inline void parallel_for(int64_t total, Fn&& fn) {
  const std::function<void(int64_t, int64_t)> f = std::forward<Fn>(fn);
  detail::ThreadPool::instance().run(total, f);
}

}  // namespace oasflow
