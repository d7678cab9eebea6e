#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xdr/batch.hpp"
#include "xdr/corpus.hpp"
#include "xdr/matrix.hpp"
#include "xdr/rng.hpp"
#include "xdr/serialize.hpp"

namespace xdr {

enum class Side { user, item };

// Trainable attention keys: one row per user (P), item (Q) and word (T).
struct MemoryKeys {
  Matrix P;  // M x K2
  Matrix Q;  // N x K2
  Matrix T;  // H x K2

  static MemoryKeys init(std::size_t users, std::size_t items,
                         std::size_t words, std::size_t k2, SplitRng rng);
  std::size_t k2() const { return P.cols; }
};

// Attention runs over the unique words of an entity's review set, capped for
// memory safety; word multiplicity does not enter the logits.
inline constexpr std::size_t kMaxUniqueWords = 10000;

std::vector<std::uint32_t> review_support(const WordMultiset& reviews);

struct AttentionMap {
  std::vector<std::uint32_t> words;
  std::vector<double> weights;  // aligned with words, sums to 1 when non-empty
};

AttentionMap attention_weights(Side side, std::uint32_t entity,
                               const MemoryKeys& keys,
                               const InteractionSet& iset);

// Softmax-weighted average of the word semantic vectors; zero vector for an
// empty review set.
std::vector<double> textual_feature(Side side, std::uint32_t entity,
                                    const MemoryKeys& keys,
                                    const InteractionSet& iset,
                                    const Matrix& S);

double tmn_predict(std::uint32_t u, std::uint32_t i, const MemoryKeys& keys,
                   const InteractionSet& iset, const Matrix& S);

struct TmnGradients {
  Matrix P, Q, T;
};

// Cross-entropy over the batch plus lambda times the squared Frobenius norm
// of the P/Q/T rows the batch touches (touched T rows = union of the touched
// entities' supports).
double tmn_loss(const Batch& batch, const MemoryKeys& keys,
                const InteractionSet& iset, const Matrix& S, double lambda);
double tmn_loss_and_gradients(const Batch& batch, const MemoryKeys& keys,
                              const InteractionSet& iset, const Matrix& S,
                              double lambda, TmnGradients* grads);

struct TmnConfig {
  std::size_t k2 = 8;
  double lr = 0.01;
  double lambda = 0.01;
  std::size_t rho = 1;         // negatives per positive
  std::size_t batch_size = 256;
  std::size_t max_iters = 200;
  std::uint64_t seed = 1;
};

struct TmnResult {
  MemoryKeys keys;            // best-epoch keys
  TextualFeatures features;   // materialized from best keys, f32-quantized
  std::vector<double> val_f1_trace;  // validation F1@2 per epoch
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Adam training over all training positives with rho sampled negatives per
// positive; model selection by validation F1@2.
TmnResult train_tmn(const DatasetBundle& data, const TmnConfig& config);

// E/F rows for every entity from the given keys (not quantized).
TextualFeatures materialize_features(const MemoryKeys& keys,
                                     const InteractionSet& iset,
                                     const Matrix& S);

}  // namespace xdr
