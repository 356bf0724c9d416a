#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string_view>
#include <vector>

namespace trustbench {

// Generator identity recorded in run manifests. Replay digests are only
// comparable between runs that report the same algorithm string.
inline constexpr std::string_view kRngAlgorithm = "xoshiro256ss+boxmuller/1";

// splitmix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based stream split. Every random stream in a run is seeded as
//   derive_seed(master, {tag, i, j, ...})
// where the path is a fixed (tag, counter...) tuple, so any stream can be
// re-created independently of scheduling order. Each path element is folded
// through the splitmix64 finalizer with a golden-ratio offset.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t x = mix64(master ^ 0x6A09E667F3BCC908ULL);
  for (std::uint64_t w : path) {
    x = mix64(x + 0x9E3779B97F4A7C15ULL * (w + 1));
  }
  return x;
}

// Stream tags used by the experiment driver. Values are part of the replay
// contract: renumbering them changes every derived stream.
enum class StreamTag : std::uint64_t {
  worker_identity = 1,  // per-worker base seed
  anomaly_assignment = 2,
  policy_sampling = 3,  // per batch
  reporter_sim = 4,     // per (batch, task, attempt)
  endorser_selection = 5,
  endorser_sim = 6,  // per (batch, task, attempt, endorser)
  sweep_run = 7,     // per sweep repetition
};

constexpr std::uint64_t tag(StreamTag t) noexcept {
  return static_cast<std::uint64_t>(t);
}

// xoshiro256** (Blackman & Vigna 2018) with Box-Muller normals. Implemented
// here rather than via <random> because normal_distribution's sequence is not
// pinned by the standard; this stream produces identical draws wherever the
// same libm is used.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : state_) {
      sm += 0x9E3779B97F4A7C15ULL;
      word = mix64(sm);
    }
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n >= 1. Multiply-shift range reduction.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; one draw per call, two words consumed.
  double normal() noexcept {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

// Uniform k-subset without replacement (partial Fisher-Yates over a copy).
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, RngStream& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace trustbench
