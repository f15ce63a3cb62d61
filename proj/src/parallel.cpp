#include "repdisp/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace repdisp {
namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_workers() {
  const char* raw = std::getenv(kWorkersEnv);
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    long v = std::stol(raw);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::size_t worker_count() {
  if (std::size_t o = g_override.load(); o > 0) return o;
  if (std::size_t e = env_workers(); e > 0) return e;
  std::size_t hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void set_worker_count(std::optional<std::size_t> workers) {
  g_override.store(workers.value_or(0));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t err_index = std::numeric_limits<std::size_t>::max();
  std::exception_ptr err;

  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (err) std::rethrow_exception(err);
}

double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& term) {
  std::vector<double> terms(n);
  parallel_for(n, [&](std::size_t i) { terms[i] = term(i); });
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

}  // namespace repdisp
