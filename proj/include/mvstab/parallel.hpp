#pragma once

// Deterministic fork-join helpers. Work is split into index ranges whose
// results land in fixed slots, so output never depends on the worker count.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mvstab {

/// Worker count: hardware concurrency, capped by MVSTAB_THREADS when set.
inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MVSTAB_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      // Unparseable values are ignored.
    }
  }
  return n;
}

/// Calls body(begin, end) over [0, n) split into at most `workers` contiguous
/// ranges whose boundaries are multiples of `align`. The first exception
/// thrown by any range is rethrown after all ranges finish.
template <class Body>
void parallel_ranges(std::size_t n, Body&& body, std::size_t workers = worker_count(),
                     std::size_t align = 1) {
  if (n == 0) return;
  workers = std::max<std::size_t>(1, std::min(workers, (n + align - 1) / align));
  if (workers == 1) {
    body(std::size_t{0}, n);
    return;
  }
  const std::size_t units = (n + align - 1) / align;
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  auto run = [&](std::size_t w) {
    const std::size_t b = std::min(n, units * w / workers * align);
    const std::size_t e = std::min(n, units * (w + 1) / workers * align);
    try {
      if (b < e) body(b, e);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run, w);
  run(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// out[i] = f(i) for i in [0, n), evaluated in parallel, ordered by index.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, F&& f, std::size_t workers = worker_count()) {
  std::vector<T> out(n);
  parallel_ranges(
      n,
      [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = f(i);
      },
      workers);
  return out;
}

}  // namespace mvstab
