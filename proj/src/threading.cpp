#include "himosa/threading.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace himosa {

int thread_budget() {
  int budget = 0;
  if (const char* env = std::getenv("HIMOSA_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 0) budget = static_cast<int>(v);
  }
  if (budget == 0) {
    budget = static_cast<int>(std::thread::hardware_concurrency());
    if (budget <= 0) budget = 1;
  }
  return budget;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  int workers = static_cast<int>(std::min<int64_t>(thread_budget(), n));
  if (workers <= 1 || n < 4) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  auto run_chunk = [&](int w) {
    int64_t lo = n * w / workers;
    int64_t hi = n * (w + 1) / workers;
    for (int64_t i = lo; i < hi; ++i) fn(i);
  };
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        run_chunk(w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  try {
    run_chunk(0);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace himosa
