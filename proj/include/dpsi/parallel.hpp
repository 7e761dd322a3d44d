#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dpsi {

/// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is
/// processed by exactly one thread, so results written per index are
/// independent of the schedule. Exceptions are rethrown in the caller.
template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 256) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(t);
  for (std::size_t k = 0; k < t; ++k) {
    const std::size_t b = n * k / t, e = n * (k + 1) / t;
    pool.emplace_back([&, k, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

inline int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace dpsi
