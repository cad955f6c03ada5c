#pragma once

#include <cstdint>
#include <functional>

namespace himosa {

// Worker cap from the HIMOSA_THREADS env var; 0 or unset means auto
// (hardware concurrency).
int thread_budget();

// Static-chunked parallel map over [0, n). Falls back to inline execution for
// small n or a budget of one. fn must only touch state owned by its index;
// results must not depend on scheduling (the library only maps over
// independent windows and merges in index order).
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace himosa
