#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace bayesmech {

using Rng = std::mt19937_64;

/// Seed for stream `stream` of a run seeded with `seed`. Streams are
/// independent of how work is scheduled, so results do not depend on the
/// number of worker threads.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

Rng make_rng(std::uint64_t seed, std::uint64_t stream);

/// Worker count: BAYESMECH_THREADS if set and positive, otherwise the
/// hardware concurrency (at least 1).
unsigned worker_count();

/// Runs body(begin, end) over [0, n) split into contiguous ranges, one per
/// worker. The first exception thrown by any worker is rethrown.
void parallel_ranges(std::size_t n,
                     const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace bayesmech
