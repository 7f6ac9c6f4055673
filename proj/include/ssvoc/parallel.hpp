#ifndef SSVOC_PARALLEL_HPP
#define SSVOC_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ssvoc {

/// Fixed partition of [0, n) into chunks of `chunk_size`. The partition never
/// depends on the number of worker threads, so a reduction that folds the
/// per-chunk partials in chunk order is reproducible on any machine.
struct ChunkPlan {
  std::size_t n = 0;
  std::size_t chunk_size = 1;

  std::size_t num_chunks() const { return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size; }
  std::size_t begin(std::size_t c) const { return c * chunk_size; }
  std::size_t end(std::size_t c) const { return std::min(n, (c + 1) * chunk_size); }
};

inline std::size_t worker_count(std::size_t num_chunks) {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return std::min(hw, num_chunks);
}

/// Runs `body(chunk_index, begin, end)` for every chunk of the plan, spreading
/// chunks over worker threads. Chunk c always covers the same index range.
template <typename Body>
void for_each_chunk(const ChunkPlan& plan, Body&& body) {
  const std::size_t chunks = plan.num_chunks();
  const std::size_t workers = worker_count(chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c, plan.begin(c), plan.end(c));
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) body(c, plan.begin(c), plan.end(c));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Map over chunks, then fold the partials strictly in chunk order.
template <typename Partial, typename Map, typename Fold>
Partial map_reduce_chunks(const ChunkPlan& plan, Partial init, Map&& map, Fold&& fold) {
  std::vector<Partial> partials(plan.num_chunks(), init);
  for_each_chunk(plan, [&](std::size_t c, std::size_t b, std::size_t e) { partials[c] = map(b, e); });
  for (auto& p : partials) fold(init, p);
  return init;
}

}  // namespace ssvoc

#endif  // SSVOC_PARALLEL_HPP
