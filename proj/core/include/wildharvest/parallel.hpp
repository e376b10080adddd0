#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

namespace wildharvest {

/// Applies `fn` to every item with at most `parallelism` concurrent calls.
/// Results are stored by input index, so output order never depends on
/// completion order. The first exception thrown by `fn` is rethrown after all
/// workers have stopped.
template <typename T, typename F>
auto parallel_map(const std::vector<T>& items, std::size_t parallelism, F fn)
    -> std::vector<std::invoke_result_t<F&, const T&>> {
  using R = std::invoke_result_t<F&, const T&>;
  std::vector<R> results(items.size());
  if (items.empty()) return results;
  const std::size_t workers = std::clamp<std::size_t>(parallelism, 1, items.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i]);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= items.size() || failed.load()) return;
          try {
            results[i] = fn(items[i]);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            failed.store(true);
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace wildharvest
