#pragma once

#include <cstdint>
#include <vector>

namespace xdr {

// One training example: a (user, item) pair with a binary label and an
// optional loss weight (1 everywhere except WTCF negatives).
struct Example {
  std::uint32_t u = 0;
  std::uint32_t i = 0;
  double label = 1.0;
  double weight = 1.0;
};

using Batch = std::vector<Example>;

}  // namespace xdr
