#include "msad/common.hpp"

#include <atomic>
#include <mutex>

namespace msad {

namespace {
int g_threads = 0;  // 0 = hardware concurrency
}

int thread_count() {
  if (g_threads > 0) return g_threads;
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void set_thread_count(int n) { g_threads = n; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int nt = thread_count();
  if (nt <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load(std::memory_order_relaxed)) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int spawn = static_cast<int>(std::min<std::size_t>(nt, n));
  pool.reserve(spawn - 1);
  for (int t = 1; t < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace msad
