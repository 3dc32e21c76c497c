#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace ivkit {

/// Static-partition parallel loop over [begin, end). Each index must be an
/// independent work item writing only to its own output slot; results are
/// then identical for any `jobs` value. The first exception thrown by a
/// worker is rethrown on the calling thread.
inline void parallel_for(int begin, int end, int jobs,
                         const std::function<void(int)>& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (int i = begin + w; i < end; i += jobs) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ivkit
