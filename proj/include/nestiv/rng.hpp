#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace nestiv {

// Deterministic RNG for simulation and resampling. Every consumer derives its
// own substream from (root seed, stream name, index), so results do not depend
// on scheduling or thread count. Generator is xoshiro256++ with splitmix64
// state expansion; samplers are written out explicitly because the standard
// library distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t root, std::string_view name, std::uint64_t index);

  std::uint64_t next_u64();
  // uniform on [0,1), 53-bit resolution
  double uniform();
  double uniform(double lo, double hi);
  // standard normal via Marsaglia polar
  double normal();
  double normal(double mean, double sd);
  bool bernoulli(double p);
  int binomial(int n, double p);
  int poisson(double lambda);
  // index sampled from unnormalized nonnegative weights
  int categorical(const double* w, int k);
  // integer uniform on [0, n) without modulo bias
  std::uint64_t below(std::uint64_t n);
  void shuffle(std::vector<int>& v);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t hash_name(std::string_view name);

}  // namespace nestiv
