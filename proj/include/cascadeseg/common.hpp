#ifndef CASCADESEG_COMMON_HPP
#define CASCADESEG_COMMON_HPP

#include <Eigen/Core>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cseg {

using Index = Eigen::Index;

/// Row-major dense grid, the storage convention for images, masks and heatmap
/// channels throughout (row = y, col = x).
template <typename T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Seeded generator used by every randomized operation. All draws are made
/// through one engine instance per call site so results are reproducible
/// under a fixed seed.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Index uniform_index(Rng& rng, Index lo, Index hi) {  // inclusive bounds
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline double normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

/// Derives an independent child seed; used to give each pipeline stage its
/// own stream so stages stay reproducible when budgets change.
inline std::uint64_t child_seed(Rng& rng) { return rng(); }

/// Worker-thread cap: min(hardware, CASCADESEG_THREADS if set). Deterministic
/// mode forces 1.
inline int worker_threads(bool deterministic = false) {
  if (deterministic) return 1;
  unsigned hw = std::thread::hardware_concurrency();
  int threads = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("CASCADESEG_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < threads) threads = cap;
  }
  return threads;
}

/// Runs fn(i) for i in [0, n) over `threads` workers. Results must be written
/// into per-index slots by the caller; the index partition is static so the
/// output ordering never depends on scheduling.
inline void parallel_for(Index n, int threads, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  int used = static_cast<int>(std::min<Index>(threads, n));
  pool.reserve(used);
  for (int t = 0; t < used; ++t) {
    pool.emplace_back([&, t] {
      for (Index i = t; i < n; i += used) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

namespace detail {

// Little-endian primitives shared by the binary file formats.

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xffu),
                              static_cast<unsigned char>((v >> 8) & 0xffu),
                              static_cast<unsigned char>((v >> 16) & 0xffu),
                              static_cast<unsigned char>((v >> 24) & 0xffu)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("binary file: truncated u32 field");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

}  // namespace cseg

#endif
