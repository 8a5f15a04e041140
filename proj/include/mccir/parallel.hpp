#pragma once

#include <cstddef>
#include <functional>

namespace mccir {

// Number of worker threads: hardware concurrency, optionally capped by the
// MCCIR_THREADS environment variable (values < 1 mean 1).
std::size_t worker_count();

// Split [0, n) into fixed-size chunks and run fn(chunk_index, begin, end) for
// each, distributing chunks across workers. Chunk boundaries depend only on
// (n, chunk_size), so callers that store per-chunk partials and merge them in
// chunk order get results independent of the thread count.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace mccir
