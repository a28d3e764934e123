#include "hdk/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace hdk {
namespace {

std::atomic<int> g_override{0};

int env_threads() {
  const char* v = std::getenv("HDK_THREADS");
  if (v == nullptr || *v == '\0') return 0;
  try {
    return std::max(1, std::stoi(v));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

int thread_count() {
  if (int o = g_override.load(); o > 0) return o;
  if (int e = env_threads(); e > 0) return e;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_thread_count(int n) { g_override.store(std::max(0, n)); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
  const std::int64_t total = end - begin;
  if (total <= 0) return;
  const int workers =
      static_cast<int>(std::min<std::int64_t>(thread_count(), total));
  if (workers <= 1) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }

  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
      const std::int64_t lo = begin + total * t / workers;
      const std::int64_t hi = begin + total * (t + 1) / workers;
      pool.emplace_back([&, t, lo, hi] {
        try {
          for (std::int64_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace hdk
