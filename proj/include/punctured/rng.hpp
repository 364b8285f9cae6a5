#pragma once

#include <cstdint>
#include <random>

namespace punctured {

// Independent substreams drawn from one RngSeed. Each generation routine
// uses its own purpose so that, e.g., the mask of a trial does not depend on
// how many normals the noise consumed.
enum class RngPurpose : std::uint64_t {
  Signal = 1,
  Noise = 2,
  Mask = 3,
  Init = 4,
  PowerIteration = 5,
  Sampling = 6,
};

// (seed, stream) pair. Equal pairs reproduce identical draws on one platform.
struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  // Engine for the given purpose. `salt` separates repeated uses of the same
  // purpose, e.g. successive random restarts.
  std::mt19937_64 engine(RngPurpose purpose, std::uint64_t salt = 0) const;

  friend bool operator==(const RngSeed&, const RngSeed&) = default;
};

}  // namespace punctured
