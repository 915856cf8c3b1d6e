#pragma once

#include <array>
#include <cstdint>

namespace vadd {

/// Independent random streams. The numeric ids are part of the on-disk
/// reproducibility contract; do not renumber.
enum class Stream : std::uint32_t {
  data = 1,
  time = 2,
  mask = 3,
  latent = 4,
  categorical = 5,
  init = 6,
  shuffle = 7,
  test = 8,
};

/// Philox4x32-10 counter-based generator.
///
/// The 64-bit seed is the Philox key. The 128-bit counter is laid out as
/// (block index lo, block index hi, stream id, substream), so any
/// (seed, stream, substream) triple names a disjoint sequence of 2^64
/// blocks. Substreams are used for per-sample and per-step splitting.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint32_t substream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }

  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t seed_;
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
};

}  // namespace vadd
