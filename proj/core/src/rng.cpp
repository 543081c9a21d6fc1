#include "sqdiff/rng.hpp"

namespace sqdiff::rng {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

PathRng::PathRng(std::uint64_t seed, std::uint64_t path_id, std::uint64_t stream)
    : path_id_(path_id) {
  const std::uint64_t k = splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ull));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

void PathRng::seek(std::uint64_t block) {
  block_ = block;
  used_ = 4;
  normal_.reset();
}

}  // namespace sqdiff::rng
