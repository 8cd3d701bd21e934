#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mimoseg {

// Deterministic, platform-independent random stream (xoshiro256** core,
// splitmix64 seeding, Box-Muller normals). std::random distributions are
// implementation-defined, so everything here is hand-rolled on purpose:
// a seed must reproduce the same stream on every build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);
  double normal();  // standard normal
  bool bernoulli(double p);

  // Independent stream derived from this stream's construction seed and a
  // tag. Forking never consumes state, so fork order does not matter.
  Rng fork(std::uint64_t tag) const;
  Rng fork(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }

  template <typename V>
  void shuffle(std::vector<V>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t hash_name(std::string_view name);

}  // namespace mimoseg
