#include "bq/rng.hpp"

#include <cmath>
#include <numbers>

namespace bq {

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  constexpr std::uint64_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = M0 * c[0];
    const std::uint64_t p1 = M1 * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += W0;
    k[1] += W1;
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t master_seed, std::uint64_t stream) : master_(master_seed), stream_(stream) {
  const std::uint64_t k = splitmix64(master_seed ^ splitmix64(stream + 0x51ED270B27u));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

std::array<std::uint32_t, 4> CounterRng::block(std::uint64_t step, std::uint32_t tag, std::uint32_t blk) const {
  return philox4x32({static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), tag, blk}, key_);
}

namespace {
double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t x = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

void box_muller(double u1, double u2, double& z1, double& z2) {
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  z1 = r * std::cos(a);
  z2 = r * std::sin(a);
}
}  // namespace

double CounterRng::uniform(std::uint64_t step, std::uint32_t slot) const {
  const auto b = block(step, slot | 0x80000000u, 0);
  return to_unit(b[0], b[1]);
}

std::array<double, 4> CounterRng::normals4(std::uint64_t step, std::uint32_t tag) const {
  std::array<double, 4> z{};
  const auto b0 = block(step, tag, 0);
  const auto b1 = block(step, tag, 1);
  box_muller(to_unit(b0[0], b0[1]), to_unit(b0[2], b0[3]), z[0], z[1]);
  box_muller(to_unit(b1[0], b1[1]), to_unit(b1[2], b1[3]), z[2], z[3]);
  return z;
}

double CounterRng::normal(std::uint64_t step, std::uint32_t slot) const {
  const auto b = block(step, slot | 0x40000000u, 0);
  double z1, z2;
  box_muller(to_unit(b[0], b[1]), to_unit(b[2], b[3]), z1, z2);
  return z1;
}

}  // namespace bq
