#pragma once

#include <array>
#include <cstdint>

namespace bq {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// Counter-based stream: draw (step, slot) is a pure function of
// (master seed, stream index, step, slot), so ensembles and restarts never
// shift each other's numbers.
class CounterRng {
 public:
  CounterRng() = default;
  CounterRng(std::uint64_t master_seed, std::uint64_t stream);

  std::uint64_t master_seed() const { return master_; }
  std::uint64_t stream() const { return stream_; }

  // Uniform in (0, 1).
  double uniform(std::uint64_t step, std::uint32_t slot) const;
  // Four standard normals for the given step.
  std::array<double, 4> normals4(std::uint64_t step, std::uint32_t tag = 0) const;
  double normal(std::uint64_t step, std::uint32_t slot) const;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t step, std::uint32_t tag, std::uint32_t blk) const;
  std::uint64_t master_ = 0;
  std::uint64_t stream_ = 0;
  std::array<std::uint32_t, 2> key_{};
};

// Sequential convenience wrapper over CounterRng for setup draws
// (random initial states, random directions).
class SetupRng {
 public:
  SetupRng(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}
  double uniform() { return rng_.uniform(count_++, 7); }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  double normal() { return rng_.normal(count_++, 11); }

 private:
  CounterRng rng_;
  std::uint64_t count_ = 0;
};

}  // namespace bq
