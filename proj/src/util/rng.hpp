#pragma once

#include <cstdint>
#include <string>

namespace crowdnav {

// Counter-free hash used to derive independent seed streams (training envs,
// eval episodes, parameter init) from one run seed. Stateless so the streams
// stay reproducible regardless of call order.
uint64_t splitmix64(uint64_t x);

// Deterministic RNG with a portable bit-level definition (xoshiro256++ core,
// Box-Muller normals). We avoid <random> distributions on purpose: their
// output is implementation-defined, and run artifacts must be byte-stable.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  int uniform_int(int lo, int hi);          // inclusive on both ends
  double normal(double mean, double stddev);

  // Hex dump of the four state words, for resumable training state.
  std::string state_string() const;
  void set_state_string(const std::string& s);

 private:
  uint64_t s_[4];
};

}  // namespace crowdnav
