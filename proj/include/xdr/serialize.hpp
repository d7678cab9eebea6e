#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xdr/matrix.hpp"

namespace xdr {

// Frozen textual features. Values are quantized to f32 (the on-disk width)
// at freeze time, so exporting and re-importing is an exact round trip.
struct TextualFeatures {
  Matrix user;  // M x K1
  Matrix item;  // N x K1
};

void quantize_f32(Matrix& m);

void export_features(const TextualFeatures& f, const std::string& path);
TextualFeatures import_features(const std::string& path);

// Generic model checkpoint: a kind tag, the verbatim config echo, the seed,
// and named f64 matrix blocks. Written bytes are a pure function of the
// contents, which is what makes rerun determinism checkable.
struct Checkpoint {
  std::string kind;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Matrix>> blocks;

  const Matrix* find(const std::string& name) const;
  const Matrix& require(const std::string& name) const;
  void add(std::string name, Matrix m);
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace xdr
