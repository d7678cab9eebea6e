#include "xdr/tmn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "xdr/cf_models.hpp"
#include "xdr/eval.hpp"
#include "xdr/kernels.hpp"
#include "xdr/ops.hpp"

namespace xdr {

MemoryKeys MemoryKeys::init(std::size_t users, std::size_t items,
                            std::size_t words, std::size_t k2, SplitRng rng) {
  MemoryKeys k;
  auto p_rng = rng.fork("P");
  auto q_rng = rng.fork("Q");
  auto t_rng = rng.fork("T");
  k.P = Matrix::randn(users, k2, 0.01, p_rng);
  k.Q = Matrix::randn(items, k2, 0.01, q_rng);
  k.T = Matrix::randn(words, k2, 0.01, t_rng);
  return k;
}

std::vector<std::uint32_t> review_support(const WordMultiset& reviews) {
  std::vector<std::uint32_t> words;
  words.reserve(std::min(reviews.size(), kMaxUniqueWords));
  for (const auto& [w, c] : reviews) {
    if (words.size() == kMaxUniqueWords) break;
    words.push_back(w);
  }
  return words;
}

namespace {

struct EntityAttention {
  std::vector<std::uint32_t> words;
  std::vector<double> weights;
  std::vector<double> feature;  // K1
};

const WordMultiset& reviews_of(Side side, std::uint32_t entity,
                               const InteractionSet& iset) {
  if (side == Side::user) {
    if (entity >= iset.num_users)
      throw std::out_of_range("attention: user index out of range");
    return iset.user_reviews[entity];
  }
  if (entity >= iset.num_items)
    throw std::out_of_range("attention: item index out of range");
  return iset.item_reviews[entity];
}

EntityAttention attend(Side side, std::uint32_t entity, const MemoryKeys& keys,
                       const InteractionSet& iset, const Matrix* S) {
  EntityAttention out;
  out.words = review_support(reviews_of(side, entity, iset));
  const Matrix& keymat = side == Side::user ? keys.P : keys.Q;
  std::span<const double> key = keymat.row(entity);
  out.weights.resize(out.words.size());
  if (!out.words.empty()) {
    std::vector<double> logits(out.words.size());
    for (std::size_t j = 0; j < out.words.size(); ++j)
      logits[j] = kernels::dot(key.data(), keys.T.row(out.words[j]).data(),
                               key.size());
    stable_softmax(logits, out.weights);
  }
  if (S) {
    out.feature.assign(S->cols, 0.0);
    for (std::size_t j = 0; j < out.words.size(); ++j)
      kernels::axpy(out.weights[j], S->row(out.words[j]).data(),
                    out.feature.data(), S->cols);
  }
  return out;
}

}  // namespace

AttentionMap attention_weights(Side side, std::uint32_t entity,
                               const MemoryKeys& keys,
                               const InteractionSet& iset) {
  auto a = attend(side, entity, keys, iset, nullptr);
  return AttentionMap{std::move(a.words), std::move(a.weights)};
}

std::vector<double> textual_feature(Side side, std::uint32_t entity,
                                    const MemoryKeys& keys,
                                    const InteractionSet& iset,
                                    const Matrix& S) {
  return attend(side, entity, keys, iset, &S).feature;
}

double tmn_predict(std::uint32_t u, std::uint32_t i, const MemoryKeys& keys,
                   const InteractionSet& iset, const Matrix& S) {
  auto eu = textual_feature(Side::user, u, keys, iset, S);
  auto fi = textual_feature(Side::item, i, keys, iset, S);
  return sigmoid(kernels::dot(eu.data(), fi.data(), eu.size()));
}

namespace {

// Backprop d(loss)/d(feature) through the attention softmax into the entity
// key row and the touched word key rows.
void attention_backward(const EntityAttention& at, std::span<const double> key,
                        const Matrix& S, const Matrix& T,
                        std::span<const double> dfeature, double* dkey,
                        Matrix& dT) {
  if (at.words.empty()) return;
  std::size_t n = at.words.size(), k1 = S.cols, k2 = key.size();
  std::vector<double> b(n);
  double mix = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    b[j] = kernels::dot(dfeature.data(), S.row(at.words[j]).data(), k1);
    mix += at.weights[j] * b[j];
  }
  for (std::size_t j = 0; j < n; ++j) {
    double de = at.weights[j] * (b[j] - mix);
    kernels::axpy(de, T.row(at.words[j]).data(), dkey, k2);
    kernels::axpy(de, key.data(), dT.row(at.words[j]).data(), k2);
  }
}

double loss_and_maybe_gradients(const Batch& batch, const MemoryKeys& keys,
                                const InteractionSet& iset, const Matrix& S,
                                double lambda, TmnGradients* grads) {
  if (grads) {
    grads->P = Matrix(keys.P.rows, keys.P.cols);
    grads->Q = Matrix(keys.Q.rows, keys.Q.cols);
    grads->T = Matrix(keys.T.rows, keys.T.cols);
  }
  if (batch.empty()) return 0.0;

  // Unique entities in first-appearance order keep every accumulation loop
  // deterministic.
  std::unordered_map<std::uint32_t, EntityAttention> users, items;
  std::unordered_map<std::uint32_t, std::vector<double>> du, df;
  std::vector<std::uint32_t> uniq_users, uniq_items;
  for (const auto& ex : batch) {
    if (users.try_emplace(ex.u).second) {
      users.at(ex.u) = attend(Side::user, ex.u, keys, iset, &S);
      uniq_users.push_back(ex.u);
    }
    if (items.try_emplace(ex.i).second) {
      items.at(ex.i) = attend(Side::item, ex.i, keys, iset, &S);
      uniq_items.push_back(ex.i);
    }
  }

  double loss = 0.0;
  std::size_t k1 = S.cols;
  for (const auto& ex : batch) {
    const auto& eu = users.at(ex.u).feature;
    const auto& fi = items.at(ex.i).feature;
    double pred = sigmoid(kernels::dot(eu.data(), fi.data(), k1));
    loss += binary_cross_entropy(pred, ex.label, ex.weight);
    if (grads) {
      double g = ex.weight * (pred - ex.label);
      auto& deu = du.try_emplace(ex.u, k1, 0.0).first->second;
      auto& dfi = df.try_emplace(ex.i, k1, 0.0).first->second;
      kernels::axpy(g, fi.data(), deu.data(), k1);
      kernels::axpy(g, eu.data(), dfi.data(), k1);
    }
  }

  // Regularize exactly the rows the batch touches; T rows touched = union of
  // the touched entities' supports.
  std::unordered_set<std::uint32_t> tword_set;
  for (std::uint32_t u : uniq_users) {
    loss += lambda * kernels::squared_norm(keys.P.row(u).data(), keys.P.cols);
    const auto& at = users.at(u);
    tword_set.insert(at.words.begin(), at.words.end());
  }
  for (std::uint32_t i : uniq_items) {
    loss += lambda * kernels::squared_norm(keys.Q.row(i).data(), keys.Q.cols);
    const auto& at = items.at(i);
    tword_set.insert(at.words.begin(), at.words.end());
  }
  std::vector<std::uint32_t> twords(tword_set.begin(), tword_set.end());
  std::sort(twords.begin(), twords.end());
  for (std::uint32_t w : twords)
    loss += lambda * kernels::squared_norm(keys.T.row(w).data(), keys.T.cols);

  if (grads) {
    for (std::uint32_t u : uniq_users) {
      attention_backward(users.at(u), keys.P.row(u), S, keys.T, du.at(u),
                         grads->P.row(u).data(), grads->T);
      kernels::axpy(2.0 * lambda, keys.P.row(u).data(), grads->P.row(u).data(),
                    keys.P.cols);
    }
    for (std::uint32_t i : uniq_items) {
      attention_backward(items.at(i), keys.Q.row(i), S, keys.T, df.at(i),
                         grads->Q.row(i).data(), grads->T);
      kernels::axpy(2.0 * lambda, keys.Q.row(i).data(), grads->Q.row(i).data(),
                    keys.Q.cols);
    }
    for (std::uint32_t w : twords)
      kernels::axpy(2.0 * lambda, keys.T.row(w).data(), grads->T.row(w).data(),
                    keys.T.cols);
  }
  return loss;
}

}  // namespace

double tmn_loss(const Batch& batch, const MemoryKeys& keys,
                const InteractionSet& iset, const Matrix& S, double lambda) {
  return loss_and_maybe_gradients(batch, keys, iset, S, lambda, nullptr);
}

double tmn_loss_and_gradients(const Batch& batch, const MemoryKeys& keys,
                              const InteractionSet& iset, const Matrix& S,
                              double lambda, TmnGradients* grads) {
  return loss_and_maybe_gradients(batch, keys, iset, S, lambda, grads);
}

TextualFeatures materialize_features(const MemoryKeys& keys,
                                     const InteractionSet& iset,
                                     const Matrix& S) {
  TextualFeatures f;
  f.user = Matrix(iset.num_users, S.cols);
  f.item = Matrix(iset.num_items, S.cols);
  for (std::uint32_t u = 0; u < iset.num_users; ++u) {
    auto e = textual_feature(Side::user, u, keys, iset, S);
    std::copy(e.begin(), e.end(), f.user.row(u).begin());
  }
  for (std::uint32_t i = 0; i < iset.num_items; ++i) {
    auto e = textual_feature(Side::item, i, keys, iset, S);
    std::copy(e.begin(), e.end(), f.item.row(i).begin());
  }
  return f;
}

TmnResult train_tmn(const DatasetBundle& data, const TmnConfig& config) {
  if (!data.table)
    throw std::runtime_error("train_tmn: bundle carries no word vectors");
  const Matrix& S = data.table->S;
  const InteractionSet& iset = data.iset;

  std::vector<IndexPair> train_pairs;
  for (std::size_t p = 0; p < iset.positives.size(); ++p)
    if (data.split.assignment[p] ==
        static_cast<std::uint8_t>(SplitPart::train))
      train_pairs.push_back(iset.positives[p]);
  if (train_pairs.empty())
    throw std::runtime_error("train_tmn: no training interactions");

  auto user_train = data.items_by_user(SplitPart::train);

  SplitRng root(config.seed);
  MemoryKeys keys = MemoryKeys::init(iset.num_users, iset.num_items,
                                     iset.words.size(), config.k2,
                                     root.fork("init"));
  AdamState st_p = AdamState::like(keys.P);
  AdamState st_q = AdamState::like(keys.Q);
  AdamState st_t = AdamState::like(keys.T);

  TmnResult result;
  result.keys = keys;
  result.best_val_f1 = -1.0;

  TmnGradients grads;
  for (std::size_t epoch = 0; epoch < config.max_iters; ++epoch) {
    Batch epoch_batch = assemble_epoch(
        train_pairs, user_train, iset.num_items, config.rho,
        root.fork("epoch").fork(epoch), nullptr);
    for (std::size_t beg = 0; beg < epoch_batch.size();
         beg += config.batch_size) {
      std::size_t end = std::min(beg + config.batch_size, epoch_batch.size());
      Batch batch(epoch_batch.begin() + static_cast<std::ptrdiff_t>(beg),
                  epoch_batch.begin() + static_cast<std::ptrdiff_t>(end));
      double loss =
          tmn_loss_and_gradients(batch, keys, iset, S, config.lambda, &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_tmn: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      adam_step(keys.P, grads.P, st_p, config.lr);
      adam_step(keys.Q, grads.Q, st_q, config.lr);
      adam_step(keys.T, grads.T, st_t, config.lr);
    }

    TextualFeatures feats = materialize_features(keys, iset, S);
    auto scorer = [&](std::uint32_t u, std::span<double> out) {
      for (std::uint32_t i = 0; i < iset.num_items; ++i)
        out[i] = kernels::dot(feats.user.row(u).data(),
                              feats.item.row(i).data(), S.cols);
    };
    auto report =
        evaluate_ranking(data, SplitPart::validation, scorer, {2},
                         CandidatePolicy::exclude_train, "tmn", config.seed);
    double f1 = report.at_k(2).f1;
    result.val_f1_trace.push_back(f1);
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      result.keys = keys;
    }
  }

  result.features = materialize_features(result.keys, iset, S);
  quantize_f32(result.features.user);
  quantize_f32(result.features.item);
  return result;
}

}  // namespace xdr
