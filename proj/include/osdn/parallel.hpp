#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace osdn {

/// Worker count from OSDN_THREADS; defaults to 1, the deterministic
/// single-threaded mode used by CI and the acceptance suite.
inline int configured_threads() {
  const char* env = std::getenv("OSDN_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

/// Runs fn(start, len) over [0,n) in fixed chunks. Chunks are statically
/// assigned to workers and must write only their own output slice, so the
/// result is identical for any thread count.
inline void parallel_chunks(int n, int chunk, const std::function<void(int, int)>& fn) {
  if (n <= 0) return;
  std::vector<std::pair<int, int>> jobs;
  for (int start = 0; start < n; start += chunk)
    jobs.emplace_back(start, std::min(chunk, n - start));
  const int workers = std::min<int>(configured_threads(), static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (const auto& [start, len] : jobs) fn(start, len);
    return;
  }
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (size_t j = static_cast<size_t>(w); j < jobs.size(); j += static_cast<size_t>(workers)) {
        try {
          fn(jobs[j].first, jobs[j].second);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace osdn
