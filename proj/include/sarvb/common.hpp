#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sarvb {

inline constexpr const char* kVersion = "0.1.0";

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Bad configuration (dimensions, hyperparameters, CLI options).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad data (non-finite entries, shape mismatches, malformed files).
class input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown (singular systems, divergent iterations).
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// All-zero shrinkage signal: the psi update is undefined.
class degenerate_signal_error : public input_error {
 public:
  using input_error::input_error;
};

inline unsigned default_thread_count() {
  if (const char* env = std::getenv("SARVB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs body(i) for i in [0, n) on a pool of `width` threads. Work items are
// claimed from a shared counter; callers that need ordered results write into
// a pre-sized vector indexed by i. The first exception wins and is rethrown
// after all threads join.
template <typename Body>
void parallel_for(std::size_t n, unsigned width, Body&& body) {
  if (n == 0) return;
  if (width == 0) width = default_thread_count();
  width = static_cast<unsigned>(std::min<std::size_t>(width, n));
  if (width <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(width);
  for (unsigned t = 0; t < width; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

inline void require_finite(const Eigen::Ref<const MatrixXd>& m, const char* what) {
  if (!m.allFinite()) throw input_error(std::string(what) + " contains non-finite values");
}

}  // namespace sarvb
