#include "evolflow/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace evolflow {

namespace {
std::atomic<int> g_threads{1};
}

void set_thread_count(int threads) {
  if (threads < 1) throw std::invalid_argument("thread count must be positive");
  g_threads.store(threads);
}

int thread_count() { return g_threads.load(); }

void parallel_for(Eigen::Index count, const std::function<void(Eigen::Index)>& body) {
  if (count <= 0) return;
  const Eigen::Index workers = std::min<Eigen::Index>(thread_count(), count);
  if (workers <= 1) {
    for (Eigen::Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Eigen::Index chunk = (count + workers - 1) / workers;
  for (Eigen::Index w = 0; w < workers; ++w) {
    const Eigen::Index begin = w * chunk;
    const Eigen::Index end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (Eigen::Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace evolflow
