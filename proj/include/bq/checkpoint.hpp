#pragma once

#include "bq/lagrangian.hpp"

#include <cstdint>
#include <string>

namespace bq {

// Everything needed to resume a stochastic trajectory bit-exactly.
struct Checkpoint {
  SpectralState U;
  ExtendedState e;
  std::uint64_t master_seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t step = 0;  // index of the next noise increment
  double dt = 0.0;
  PhysicalParams params;
};

// "BQCK1" container: little-endian, one CRC32 per section.
void save_checkpoint(const Checkpoint& c, const std::string& path);
// expected_n > 0 rejects a different resolution instead of interpolating.
Checkpoint load_checkpoint(const std::string& path, int expected_n = 0);

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes, int expected_n = 0);

}  // namespace bq
