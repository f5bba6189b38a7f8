#pragma once
// Shared utilities: error types, counter-based hashing, worker pool,
// deterministic number formatting.

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hjhom {

using real = double;

//============================================================================
// Errors
//============================================================================

// A specification or configuration that fails validation. The message
// aggregates every problem found, one per line.
struct InvalidSpec : std::runtime_error {
    explicit InvalidSpec(const std::string& what) : std::runtime_error(what) {}
};

// A solver that diverged, stalled, or exhausted its budget. Carries enough
// context to reproduce (step index, residual) in the message.
struct SolverFailure : std::runtime_error {
    explicit SolverFailure(const std::string& what) : std::runtime_error(what) {}
};

// A table interpolation query outside the stored axes.
struct TableRange : std::runtime_error {
    explicit TableRange(const std::string& what) : std::runtime_error(what) {}
};

//============================================================================
// Counter-based randomness
//
// Every random value in the project is a pure function of (seed, stream,
// counter). Fields can be sampled at any lattice cell in O(1) and two
// realizations with the same seed agree bit for bit.
//============================================================================

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_counter(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t counter) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (0x9e3779b97f4a7c15ULL + stream));
    h = splitmix64(h ^ (0xc2b2ae3d27d4eb4fULL + counter));
    return h;
}

// Uniform in [0,1) with 53 significant bits.
inline real uniform01(std::uint64_t h) {
    return static_cast<real>(h >> 11) * 0x1.0p-53;
}

// FNV-1a over a byte string; used to digest canonical JSON for manifests.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

//============================================================================
// Small numeric helpers
//============================================================================

inline real pos(real x) { return x > 0 ? x : 0; }
inline real sqr(real x) { return x * x; }

// Shortest round-trip decimal form; keeps CSV/JSON output deterministic and
// locale-independent.
inline std::string fmt(real x) {
    std::array<char, 40> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

inline std::string fmt(std::uint64_t x) { return std::to_string(x); }

//============================================================================
// Worker pool
//
// Runs n independent tasks on up to `workers` threads. Tasks write results
// into distinct slots so the outcome does not depend on scheduling.
//============================================================================

inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex err_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    pool.reserve(count);
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load()) throw SolverFailure(first_error);
}

}  // namespace hjhom
