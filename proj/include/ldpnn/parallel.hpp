#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace ldpnn {

// Worker cap from LDPNN_THREADS (speed knob only; results never depend on it).
int worker_count();

// Deterministic parallel map: fixed chunk boundaries, per-chunk results
// collected by chunk index, reduced by the caller in order. Identical output
// for any worker count.
template <class R, class Fn>
std::vector<R> map_chunks(std::uint64_t total, std::uint64_t chunk, Fn&& fn) {
  const std::uint64_t nchunks = total == 0 ? 0 : (total + chunk - 1) / chunk;
  std::vector<R> results(static_cast<size_t>(nchunks));
  if (nchunks == 0) return results;
  int workers = worker_count();
  if (static_cast<std::uint64_t>(workers) > nchunks)
    workers = static_cast<int>(nchunks);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto body = [&] {
    for (;;) {
      std::uint64_t c = next.fetch_add(1);
      if (c >= nchunks || failed.load()) return;
      std::uint64_t begin = c * chunk;
      std::uint64_t end = begin + chunk < total ? begin + chunk : total;
      try {
        results[static_cast<size_t>(c)] = fn(c, begin, end);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) std::rethrow_exception(error);
  return results;
}

}  // namespace ldpnn
