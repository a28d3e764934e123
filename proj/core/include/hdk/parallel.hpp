#pragma once

#include <cstdint>
#include <functional>

namespace hdk {

// Worker count used by parallel_for. Defaults to the HDK_THREADS environment
// variable when set, otherwise std::thread::hardware_concurrency().
int thread_count();

// Overrides the worker count for the current process; 0 restores the default.
void set_thread_count(int n);

// Calls fn(i) for every i in [begin, end), partitioned into contiguous
// chunks across workers. Each index is handled by exactly one call, so any
// per-index accumulation order is independent of the worker count.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace hdk
