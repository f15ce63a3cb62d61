#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace repdisp {

/// Environment variable holding the worker thread count.
inline constexpr const char* kWorkersEnv = "REPDISP_WORKERS";

/// Worker count: override if set, else $REPDISP_WORKERS, else hardware
/// concurrency. Always >= 1.
std::size_t worker_count();

/// Process-wide override, mainly for tests. nullopt restores the default.
void set_worker_count(std::optional<std::size_t> workers);

/// Runs fn(i) for i in [0, n) across the worker pool. If any call throws,
/// the exception from the lowest index is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Sum of term(i) for i in [0, n). Terms are evaluated in parallel but added
/// serially in index order, so the result does not depend on worker count.
double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& term);

}  // namespace repdisp
