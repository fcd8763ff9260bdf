#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace hilbertda::rng {

/** splitmix64 finalizer; bijective on 64-bit words. */
inline std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/** Purpose tag separating independent streams that share one seed. */
enum class Stream : std::uint64_t {
  Generic = 0,
  InitEnsemble = 1,
  PerturbedData = 2,
  Truth = 3,
  ModelNoise = 4,
  DataNoise = 5,
};

/**
 * Counter-based generator: every value is a pure function of the key
 * (seed, stream, cycle, member, coordinate). There is no hidden state,
 * so extending an ensemble or re-running a draw never changes values
 * produced under other keys, regardless of evaluation order or worker
 * count.
 *
 * normal(i) consumes logical coordinates 2i and 2i+1; do not mix
 * uniform() and normal() under the same (stream, cycle, member) key.
 */
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, Stream stream = Stream::Generic,
                      std::uint64_t cycle = 0, std::uint64_t member = 0)
      : seed_(seed),
        stream_(static_cast<std::uint64_t>(stream)),
        cycle_(cycle),
        member_(member) {}

  CounterRng with_stream(Stream s) const {
    return CounterRng(seed_, s, cycle_, member_);
  }
  CounterRng with_cycle(std::uint64_t c) const {
    CounterRng r = *this;
    r.cycle_ = c;
    return r;
  }
  CounterRng with_member(std::uint64_t m) const {
    CounterRng r = *this;
    r.member_ = m;
    return r;
  }

  std::uint64_t seed() const { return seed_; }

  /** Raw 64-bit word at a coordinate. */
  std::uint64_t word(std::uint64_t coordinate) const {
    std::uint64_t h = mix64(seed_);
    h = mix64(h ^ stream_);
    h = mix64(h ^ cycle_);
    h = mix64(h ^ member_);
    h = mix64(h ^ coordinate);
    return h;
  }

  /** Uniform draw in [0,1) with 53 random bits. */
  double uniform(std::uint64_t coordinate) const {
    return static_cast<double>(word(coordinate) >> 11) * 0x1.0p-53;
  }

  /** Standard normal draw; Box-Muller on coordinates (2i, 2i+1). */
  double normal(std::uint64_t coordinate) const {
    // u1 in (0,1] so log(u1) is finite.
    const double u1 =
        static_cast<double>((word(2 * coordinate) >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform(2 * coordinate + 1);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /** Standard normal vector on coordinates 0..dim-1. */
  Eigen::VectorXd normals(Eigen::Index dim) const {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      v[i] = normal(static_cast<std::uint64_t>(i));
    return v;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t cycle_;
  std::uint64_t member_;
};

}  // namespace hilbertda::rng
