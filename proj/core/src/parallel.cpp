#include "mdepth/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace mdepth {

namespace {
std::atomic<std::size_t> g_override{0};
std::atomic<bool> g_has_override{false};
}  // namespace

std::size_t configured_threads() {
  if (g_has_override.load()) return std::max<std::size_t>(1, g_override.load());
  std::size_t n = 0;
  if (const char* env = std::getenv("MDEPTH_THREADS")) {
    try {
      n = static_cast<std::size_t>(std::stoul(env));
    } catch (const std::exception&) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

void set_thread_override(std::size_t threads) {
  g_override = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  g_has_override = true;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(configured_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
}

}  // namespace mdepth
