#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xdr/batch.hpp"
#include "xdr/corpus.hpp"
#include "xdr/matrix.hpp"
#include "xdr/rng.hpp"
#include "xdr/serialize.hpp"

namespace xdr {

// Trainable embeddings plus (for TCF/WTCF) frozen textual features. The
// effective representation is the concatenation [U,E]_u / [V,F]_i; E and F
// never receive gradient.
struct RepresentationBank {
  Matrix U;  // M x K3
  Matrix V;  // N x K3
  std::optional<TextualFeatures> text;

  std::size_t k3() const { return U.cols; }
};

enum class CfKind { itempop, mf, tcf, wtcf };
const char* cf_kind_name(CfKind kind);
CfKind cf_kind_from_name(const std::string& name);

// score_i = training interaction count; ranking ties resolve by index.
std::vector<double> item_pop_scores(std::span<const IndexPair> train_pairs,
                                    std::size_t num_items);

// Pre-sigmoid score <[U,E]_u, [V,F]_i> and its sigmoid.
double cf_score(std::uint32_t u, std::uint32_t i,
                const RepresentationBank& bank);
double cf_predict(std::uint32_t u, std::uint32_t i,
                  const RepresentationBank& bank);

// rho items drawn uniformly without replacement from the complement of
// `positives` (sorted); fewer candidates than rho returns all of them in
// ascending order. One bounded draw is consumed per returned item.
std::vector<std::uint32_t> sample_negatives(std::size_t rho,
                                            std::span<const std::uint32_t>
                                                positives,
                                            std::uint32_t num_items,
                                            SplitRng& rng);
// Spec-level convenience: derives the user's positive set and a per-user
// stream from (seed, u).
std::vector<std::uint32_t> sample_negatives_for_user(
    std::uint32_t u, std::size_t rho, std::span<const IndexPair> train_pairs,
    std::uint32_t num_items, std::uint64_t seed);

// Popularity over mean popularity, used to weight negatives; positives get 1.
std::vector<double> wtcf_weights(std::span<const IndexPair> train_pairs,
                                 std::size_t num_items);

struct CfGradients {
  Matrix U, V;
};

// Weighted cross-entropy plus lambda * squared Frobenius norm of touched
// U/V rows. Returns the loss; gradients (same shape as U/V, untouched rows
// zero) go to *grads when non-null.
double cf_loss_and_gradients(const Batch& batch, const RepresentationBank& bank,
                             double lambda, CfGradients* grads);
double cf_loss(const Batch& batch, const RepresentationBank& bank,
               double lambda);

// Shuffled epoch pass: every training positive once, each followed by rho
// fresh uniform negatives. Negative weights come from `neg_weights` (indexed
// by item) when provided. Per-user draw streams are forked from epoch_rng.
Batch assemble_epoch(std::span<const IndexPair> train_pairs,
                     const std::vector<std::vector<std::uint32_t>>&
                         user_train_items,
                     std::uint32_t num_items, std::size_t rho,
                     SplitRng epoch_rng,
                     const std::vector<double>* neg_weights);

struct CfConfig {
  std::size_t k3 = 16;
  double lr = 0.01;
  double lambda = 0.01;
  std::size_t rho = 1;
  std::size_t batch_size = 256;
  std::size_t max_iters = 200;
  std::uint64_t seed = 1;
};

struct CfResult {
  RepresentationBank best;   // best validation F1@2 epoch
  RepresentationBank last;   // final-epoch parameters
  std::vector<double> val_f1_trace;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Adam-trained MF/TCF/WTCF. tcf and wtcf require frozen features; mf must
// not get any. itempop is not trained here (it has no parameters).
CfResult train_cf(const DatasetBundle& data, CfKind kind,
                  const CfConfig& config, const TextualFeatures* features);

}  // namespace xdr
