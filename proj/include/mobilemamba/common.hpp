#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mm {

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: ConfigError/usage -> 1,
// DataError -> 2, verification failures -> 3.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension violation; message names the offending dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (ratios, kernel sizes, unknown preset...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent external data (weight files, raw inputs).
class DataError : public Error {
 public:
  using Error::Error;
};

inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list args2;
  va_copy(args2, args);
  int len = std::vsnprintf(nullptr, 0, fmt, args);
  va_end(args);
  std::string out(len > 0 ? static_cast<size_t>(len) : 0, '\0');
  if (len > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args2);
  va_end(args2);
  return out;
}

// ---------------------------------------------------------------------------
// Scalar math helpers (f32 throughout).
// ---------------------------------------------------------------------------

inline float sigmoidf32(float x) {
  return x >= 0.f ? 1.f / (1.f + std::exp(-x)) : std::exp(x) / (1.f + std::exp(x));
}

inline float siluf32(float x) { return x * sigmoidf32(x); }

// tanh-form gelu
inline float geluf32(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608f;
  constexpr float kCubicCoeff = 0.044715f;
  float inner = kSqrt2OverPi * (x + kCubicCoeff * x * x * x);
  return 0.5f * x * (1.f + std::tanh(inner));
}

inline float softplusf32(float x) {
  if (x > 20.f) return x;  // exp would overflow float precision usefulness
  return std::log1p(std::exp(x));
}

/// Inverse of softplus, used to seed dt_proj biases: softplus(inv(y)) == y.
inline float softplus_invf32(float y) { return std::log(std::expm1(y)); }

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937 core with explicit Box-Muller so streams are
// identical across standard-library implementations.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

  uint32_t next_u32() { return state_(); }

  /// Uniform in [0, 1).
  float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (cached second sample).
  float normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = static_cast<double>(uniform());
    } while (u1 <= 1e-12);
    u2 = static_cast<double>(uniform());
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = static_cast<float>(r * std::sin(theta));
    has_spare_ = true;
    return static_cast<float>(r * std::cos(theta));
  }

  /// Normal(0, sigma) truncated to +-2 sigma by resampling.
  float trunc_normal(float sigma) {
    for (;;) {
      float z = normal();
      if (std::fabs(z) <= 2.f) return z * sigma;
    }
  }

 private:
  std::mt19937 state_;
  bool has_spare_ = false;
  float spare_ = 0.f;
};

// ---------------------------------------------------------------------------
// Thread pool. Work is always split by index ranges that do not depend on
// the worker count, so results are bit-identical at any thread setting.
// MM_THREADS caps the pool; a value of 1 (or a single-core host) runs inline.
// ---------------------------------------------------------------------------

class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int threads() const { return n_threads_; }

  /// Resize the pool; callable only when no parallel_for is in flight.
  void set_threads(int n) {
    std::lock_guard<std::mutex> guard(api_mutex_);
    if (n < 1) n = 1;
    if (n == n_threads_) return;
    stop_workers();
    n_threads_ = n;
    start_workers();
  }

  /// Run fn(begin, end) over [0, total) chunks across the pool. The calling
  /// thread participates. Chunk boundaries depend only on `total`.
  void parallel_for(size_t total, const std::function<void(size_t, size_t)>& fn) {
    if (total == 0) return;
    if (n_threads_ == 1 || total == 1) {
      fn(0, total);
      return;
    }
    std::lock_guard<std::mutex> guard(api_mutex_);
    size_t chunks = std::min<size_t>(total, static_cast<size_t>(n_threads_) * 4);
    size_t chunk_size = (total + chunks - 1) / chunks;
    job_fn_ = &fn;
    job_total_ = total;
    job_chunk_ = chunk_size;
    next_chunk_.store(0, std::memory_order_relaxed);
    pending_.store(static_cast<int>(chunks), std::memory_order_relaxed);
    {
      std::lock_guard<std::mutex> lk(wake_mutex_);
      generation_++;
    }
    wake_cv_.notify_all();
    work_loop();  // main thread joins in
    std::unique_lock<std::mutex> lk(done_mutex_);
    done_cv_.wait(lk, [&] { return pending_.load(std::memory_order_acquire) == 0; });
    job_fn_ = nullptr;
  }

 private:
  ThreadPool() {
    n_threads_ = default_threads();
    start_workers();
  }
  ~ThreadPool() { stop_workers(); }

  static int default_threads() {
    if (const char* env = std::getenv("MM_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }

  void start_workers() {
    stopping_ = false;
    for (int i = 1; i < n_threads_; ++i) {
      workers_.emplace_back([this] { worker_main(); });
    }
  }

  void stop_workers() {
    {
      std::lock_guard<std::mutex> lk(wake_mutex_);
      stopping_ = true;
      generation_++;
    }
    wake_cv_.notify_all();
    for (auto& t : workers_) t.join();
    workers_.clear();
  }

  void worker_main() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(wake_mutex_);
        wake_cv_.wait(lk, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      work_loop();
    }
  }

  void work_loop() {
    const auto* fn = job_fn_;
    if (!fn) return;
    for (;;) {
      size_t idx = next_chunk_.fetch_add(1, std::memory_order_relaxed);
      size_t begin = idx * job_chunk_;
      if (begin >= job_total_) break;
      size_t end = std::min(job_total_, begin + job_chunk_);
      (*fn)(begin, end);
      if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(done_mutex_);
        done_cv_.notify_all();
      }
    }
  }

  int n_threads_ = 1;
  std::vector<std::thread> workers_;
  std::mutex api_mutex_;
  std::mutex wake_mutex_;
  std::condition_variable wake_cv_;
  uint64_t generation_ = 0;
  bool stopping_ = false;
  const std::function<void(size_t, size_t)>* job_fn_ = nullptr;
  size_t job_total_ = 0;
  size_t job_chunk_ = 1;
  std::atomic<size_t> next_chunk_{0};
  std::atomic<int> pending_{0};
  std::mutex done_mutex_;
  std::condition_variable done_cv_;
};

inline void parallel_for(size_t total, const std::function<void(size_t, size_t)>& fn) {
  ThreadPool::instance().parallel_for(total, fn);
}

}  // namespace mm
