#pragma once

// Counter-based random streams.
//
// Philox4x32-10 keyed by (seed, stream). The 128-bit counter holds the path
// id in its low half and a block index in its high half, so every path owns an
// independent stream whose position can be set in O(1).

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace sqdiff::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Ten-round Philox4x32 bijection.
inline Block philox4x32(Block c, Key k) {
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    k[0] += 0x9E3779B9u;
    k[1] += 0xBB67AE85u;
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x);

/// Well-known stream ids.
enum Stream : std::uint64_t {
  kPathStream = 0,
  kRescaledStream = 1,
  kAuxStream = 2,
};

/// Uniform random bit generator over one path's stream. Satisfies the
/// standard URBG requirements, so it can drive <random> distributions.
class PathRng {
 public:
  using result_type = std::uint64_t;

  PathRng(std::uint64_t seed, std::uint64_t path_id, std::uint64_t stream = kPathStream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (used_ >= 4) refill();
    const std::uint64_t v = (static_cast<std::uint64_t>(buf_[used_]) << 32) | buf_[used_ + 1];
    used_ += 2;
    return v;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
  /// Standard normal.
  double normal() { return normal_(*this); }

  /// Jump to the start of block `b` (two 64-bit outputs per block).
  void seek(std::uint64_t block);
  std::uint64_t block() const { return block_; }

 private:
  void refill() {
    buf_ = philox4x32({static_cast<std::uint32_t>(path_id_), static_cast<std::uint32_t>(path_id_ >> 32),
                       static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)},
                      key_);
    ++block_;
    used_ = 0;
  }

  Key key_{};
  std::uint64_t path_id_;
  std::uint64_t block_ = 0;
  Block buf_{};
  int used_ = 4;
  std::normal_distribution<double> normal_;
};

}  // namespace sqdiff::rng
