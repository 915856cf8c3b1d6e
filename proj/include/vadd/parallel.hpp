#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace vadd {

/// Calls fn(begin, end) over contiguous blocks of [0, n) on up to
/// `threads` workers. Each index is visited exactly once; callers write
/// results into per-index slots and reduce afterwards in index order.
inline void parallel_for(std::size_t n, int threads, std::size_t block,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (block == 0) block = 1;
  const std::size_t blocks = (n + block - 1) / block;
  if (threads <= 1 || blocks <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) fn(b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = static_cast<std::size_t>(w); b < blocks; b += static_cast<std::size_t>(threads))
          fn(b * block, std::min(n, (b + 1) * block));
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vadd
