#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tograsp {

// splitmix64 finalizer; used for seed derivation and hashing.
std::uint64_t mix64(std::uint64_t x);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view s);

// Seeded generator with a platform-independent output sequence: mt19937_64
// with hand-rolled draws (53-bit mantissa uniforms, Box-Muller normals).
// Child streams are mix64(seed ^ mix64(stream + 1)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int uniform_int(int lo, int hi);        // inclusive range
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tograsp
