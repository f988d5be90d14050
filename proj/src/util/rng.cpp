#include "util/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace crowdnav {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(uint64_t seed) {
  // Expand the seed through splitmix64 so nearby seeds give unrelated states.
  uint64_t sm = seed;
  for (auto& w : s_) {
    sm += 0x9e3779b97f4a7c15ULL;
    w = splitmix64(sm);
  }
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller without caching the second variate: one normal costs two
  // uniforms, and the RNG state stays a pure function of draw count.
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state_string() const {
  char buf[4 * 16 + 4];
  std::snprintf(buf, sizeof(buf), "%016llx %016llx %016llx %016llx",
                (unsigned long long)s_[0], (unsigned long long)s_[1],
                (unsigned long long)s_[2], (unsigned long long)s_[3]);
  return buf;
}

void Rng::set_state_string(const std::string& s) {
  unsigned long long w[4];
  if (std::sscanf(s.c_str(), "%llx %llx %llx %llx", &w[0], &w[1], &w[2], &w[3]) != 4)
    throw std::runtime_error("Rng::set_state_string: malformed state: " + s);
  for (int i = 0; i < 4; ++i) s_[i] = w[i];
}

}  // namespace crowdnav
