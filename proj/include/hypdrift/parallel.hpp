#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace hypdrift {

inline constexpr const char* kWorkersEnv = "HYPDRIFT_WORKERS";

// Worker count from the environment, else the hardware concurrency.
inline std::size_t defaultWorkers() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(trialIndex) for every trial and returns the results ordered by
/// trial index, so any reduction over them is independent of `workers`.
/// If trials throw, the exception of the lowest failing index is rethrown.
template <class Fn>
auto runTrials(std::size_t trials, std::size_t workers, Fn&& fn)
    -> std::vector<std::invoke_result_t<Fn&, std::size_t>> {
  using Result = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<Result> results(trials);
  std::vector<std::exception_ptr> errors(trials);
  if (workers <= 1 || trials <= 1) {
    for (std::size_t i = 0; i < trials; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < trials; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(workers, trials);
  pool.reserve(n);
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace hypdrift
