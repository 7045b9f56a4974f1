#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace stabilab {

// SplitMix64 finaliser (Steele, Lea & Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// A reproducible random stream identified by (base_seed, stream_index).
struct SeedSpec {
    std::uint64_t base_seed = 0;
    std::uint64_t stream_index = 0;

    // Child seed: splitmix64(base_seed ^ splitmix64(stream_index)).
    constexpr std::uint64_t derive() const { return splitmix64(base_seed ^ splitmix64(stream_index)); }

    // Stream nested under this one; substream(i) != substream(j) for i != j.
    constexpr SeedSpec substream(std::uint64_t index) const { return {derive(), index}; }

    std::mt19937_64 engine() const { return std::mt19937_64(derive()); }

    friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

// Number of worker threads: STABILAB_THREADS when set (at most 256), else the
// hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, count) across worker_count() threads. Callers
// write results into per-index slots, so the outcome never depends on the
// schedule. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace stabilab
