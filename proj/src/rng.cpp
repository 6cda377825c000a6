#include "nestiv/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace nestiv {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, enough to separate stream names
std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& si : s_) si = splitmix64(sm);
}

Rng::Rng(std::uint64_t root, std::string_view name, std::uint64_t index) {
  std::uint64_t sm = root;
  sm = splitmix64(sm) ^ hash_name(name);
  sm = splitmix64(sm) ^ index;
  (void)splitmix64(sm);
  for (auto& si : s_) si = splitmix64(sm);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
  // xoshiro256++
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, q;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    q = u * u + v * v;
  } while (q >= 1.0 || q == 0.0);
  const double f = std::sqrt(-2.0 * std::log(q) / q);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

bool Rng::bernoulli(double p) { return uniform() < p; }

int Rng::binomial(int n, double p) {
  int c = 0;
  for (int i = 0; i < n; ++i) c += bernoulli(p) ? 1 : 0;
  return c;
}

namespace {

// Knuth's product-of-uniforms draw, exact for moderate rates.
int poisson_small(Rng& r, double lambda) {
  const double floor = std::exp(-lambda);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= r.uniform();
  } while (p > floor);
  return k - 1;
}

}  // namespace

int Rng::poisson(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("poisson: rate must be finite and nonnegative");
  // Counts over disjoint exposure slabs add up to a count at the summed rate,
  // so large rates reduce to repeated moderate draws without any approximation.
  int c = 0;
  while (lambda > 16.0) {
    c += poisson_small(*this, 16.0);
    lambda -= 16.0;
  }
  return c + poisson_small(*this, lambda);
}

int Rng::categorical(const double* w, int k) {
  double tot = 0.0;
  for (int i = 0; i < k; ++i) {
    if (w[i] < 0.0 || !std::isfinite(w[i]))
      throw std::invalid_argument("categorical: weights must be finite and nonnegative");
    tot += w[i];
  }
  if (tot <= 0.0) throw std::invalid_argument("categorical: all weights zero");
  double u = uniform() * tot;
  for (int i = 0; i < k - 1; ++i) {
    u -= w[i];
    if (u < 0.0) return i;
  }
  return k - 1;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

void Rng::shuffle(std::vector<int>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace nestiv
