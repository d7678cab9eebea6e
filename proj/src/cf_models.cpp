#include "xdr/cf_models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "xdr/eval.hpp"
#include "xdr/kernels.hpp"
#include "xdr/ops.hpp"

namespace xdr {

const char* cf_kind_name(CfKind kind) {
  switch (kind) {
    case CfKind::itempop: return "itempop";
    case CfKind::mf: return "mf";
    case CfKind::tcf: return "tcf";
    case CfKind::wtcf: return "wtcf";
  }
  throw std::logic_error("bad CfKind");
}

CfKind cf_kind_from_name(const std::string& name) {
  if (name == "itempop") return CfKind::itempop;
  if (name == "mf") return CfKind::mf;
  if (name == "tcf") return CfKind::tcf;
  if (name == "wtcf") return CfKind::wtcf;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

std::vector<double> item_pop_scores(std::span<const IndexPair> train_pairs,
                                    std::size_t num_items) {
  std::vector<double> scores(num_items, 0.0);
  for (auto [u, i] : train_pairs) {
    if (i >= num_items) throw std::out_of_range("item index out of range");
    scores[i] += 1.0;
  }
  return scores;
}

double cf_score(std::uint32_t u, std::uint32_t i,
                const RepresentationBank& bank) {
  double z = kernels::dot(bank.U.row(u).data(), bank.V.row(i).data(),
                          bank.U.cols);
  if (bank.text) {
    z += kernels::dot(bank.text->user.row(u).data(),
                      bank.text->item.row(i).data(), bank.text->user.cols);
  }
  return z;
}

double cf_predict(std::uint32_t u, std::uint32_t i,
                  const RepresentationBank& bank) {
  return sigmoid(cf_score(u, i, bank));
}

std::vector<std::uint32_t> sample_negatives(std::size_t rho,
                                            std::span<const std::uint32_t>
                                                positives,
                                            std::uint32_t num_items,
                                            SplitRng& rng) {
  std::size_t candidates =
      num_items > positives.size() ? num_items - positives.size() : 0;
  if (candidates <= rho) {
    // Exhaustion: every non-positive item, ascending.
    std::vector<std::uint32_t> all;
    all.reserve(candidates);
    std::size_t e = 0;
    for (std::uint32_t i = 0; i < num_items; ++i) {
      while (e < positives.size() && positives[e] < i) ++e;
      if (e < positives.size() && positives[e] == i) continue;
      all.push_back(i);
    }
    return all;
  }
  // Each draw is uniform over the remaining candidates: draw an order
  // statistic and shift it past the sorted exclusions.
  std::vector<std::uint32_t> excluded(positives.begin(), positives.end());
  std::vector<std::uint32_t> out;
  out.reserve(rho);
  for (std::size_t d = 0; d < rho; ++d) {
    auto r = static_cast<std::uint32_t>(
        rng.next_below(num_items - excluded.size()));
    for (std::uint32_t e : excluded) {
      if (e <= r) ++r;
      else break;
    }
    out.push_back(r);
    excluded.insert(std::lower_bound(excluded.begin(), excluded.end(), r), r);
  }
  return out;
}

std::vector<std::uint32_t> sample_negatives_for_user(
    std::uint32_t u, std::size_t rho, std::span<const IndexPair> train_pairs,
    std::uint32_t num_items, std::uint64_t seed) {
  std::vector<std::uint32_t> positives;
  for (auto [pu, pi] : train_pairs)
    if (pu == u) positives.push_back(pi);
  std::sort(positives.begin(), positives.end());
  positives.erase(std::unique(positives.begin(), positives.end()),
                  positives.end());
  SplitRng rng = SplitRng(seed).fork("negatives").fork(u);
  return sample_negatives(rho, positives, num_items, rng);
}

std::vector<double> wtcf_weights(std::span<const IndexPair> train_pairs,
                                 std::size_t num_items) {
  auto pop = item_pop_scores(train_pairs, num_items);
  double mean = num_items == 0
                    ? 0.0
                    : kernels::sum(pop.data(), pop.size()) /
                          static_cast<double>(num_items);
  std::vector<double> w(num_items, 1.0);
  if (mean > 0.0)
    for (std::size_t i = 0; i < num_items; ++i) w[i] = pop[i] / mean;
  return w;
}

double cf_loss_and_gradients(const Batch& batch, const RepresentationBank& bank,
                             double lambda, CfGradients* grads) {
  if (grads) {
    grads->U = Matrix(bank.U.rows, bank.U.cols);
    grads->V = Matrix(bank.V.rows, bank.V.cols);
  }
  double loss = 0.0;
  std::unordered_set<std::uint32_t> tu_set, ti_set;
  std::vector<std::uint32_t> tu, ti;  // first-appearance order
  std::size_t k3 = bank.U.cols;
  for (const auto& ex : batch) {
    double pred = cf_predict(ex.u, ex.i, bank);
    loss += binary_cross_entropy(pred, ex.label, ex.weight);
    if (tu_set.insert(ex.u).second) tu.push_back(ex.u);
    if (ti_set.insert(ex.i).second) ti.push_back(ex.i);
    if (grads) {
      double g = ex.weight * (pred - ex.label);
      kernels::axpy(g, bank.V.row(ex.i).data(), grads->U.row(ex.u).data(), k3);
      kernels::axpy(g, bank.U.row(ex.u).data(), grads->V.row(ex.i).data(), k3);
    }
  }
  for (std::uint32_t u : tu) {
    loss += lambda * kernels::squared_norm(bank.U.row(u).data(), k3);
    if (grads)
      kernels::axpy(2.0 * lambda, bank.U.row(u).data(), grads->U.row(u).data(),
                    k3);
  }
  for (std::uint32_t i : ti) {
    loss += lambda * kernels::squared_norm(bank.V.row(i).data(), k3);
    if (grads)
      kernels::axpy(2.0 * lambda, bank.V.row(i).data(), grads->V.row(i).data(),
                    k3);
  }
  return loss;
}

double cf_loss(const Batch& batch, const RepresentationBank& bank,
               double lambda) {
  return cf_loss_and_gradients(batch, bank, lambda, nullptr);
}

Batch assemble_epoch(std::span<const IndexPair> train_pairs,
                     const std::vector<std::vector<std::uint32_t>>&
                         user_train_items,
                     std::uint32_t num_items, std::size_t rho,
                     SplitRng epoch_rng,
                     const std::vector<double>* neg_weights) {
  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t p = 0; p < order.size(); ++p) order[p] = p;
  auto order_rng = epoch_rng.fork("order");
  order_rng.shuffle(order);

  SplitRng neg_root = epoch_rng.fork("negatives");
  std::unordered_map<std::uint32_t, SplitRng> user_stream;

  Batch out;
  out.reserve(train_pairs.size() * (1 + rho));
  for (std::size_t p : order) {
    auto [u, i] = train_pairs[p];
    out.push_back({u, i, 1.0, 1.0});
    if (rho == 0) continue;
    auto it = user_stream.find(u);
    if (it == user_stream.end())
      it = user_stream.emplace(u, neg_root.fork(u)).first;
    for (std::uint32_t n :
         sample_negatives(rho, user_train_items[u], num_items, it->second)) {
      out.push_back({u, n, 0.0, neg_weights ? (*neg_weights)[n] : 1.0});
    }
  }
  return out;
}

CfResult train_cf(const DatasetBundle& data, CfKind kind,
                  const CfConfig& config, const TextualFeatures* features) {
  if (kind == CfKind::itempop)
    throw std::invalid_argument("train_cf: itempop has no trainable parameters");
  bool wants_text = kind == CfKind::tcf || kind == CfKind::wtcf;
  if (wants_text && !features)
    throw std::runtime_error(std::string(cf_kind_name(kind)) +
                             " needs frozen textual features; train tmn and "
                             "export them first");
  if (!wants_text && features)
    throw std::invalid_argument("mf takes no textual features");

  const InteractionSet& iset = data.iset;
  std::vector<IndexPair> train_pairs;
  for (std::size_t p = 0; p < iset.positives.size(); ++p)
    if (data.split.assignment[p] ==
        static_cast<std::uint8_t>(SplitPart::train))
      train_pairs.push_back(iset.positives[p]);
  if (train_pairs.empty())
    throw std::runtime_error("train_cf: no training interactions");

  if (features) {
    if (features->user.rows != iset.num_users ||
        features->item.rows != iset.num_items)
      throw std::runtime_error(
          "textual features do not match the dataset dimensions");
  }

  auto user_train = data.items_by_user(SplitPart::train);
  std::vector<double> neg_w;
  if (kind == CfKind::wtcf)
    neg_w = wtcf_weights(train_pairs, iset.num_items);

  SplitRng root(config.seed);
  RepresentationBank bank;
  {
    auto u_rng = root.fork("init").fork("U");
    auto v_rng = root.fork("init").fork("V");
    bank.U = Matrix::randn(iset.num_users, config.k3, 0.01, u_rng);
    bank.V = Matrix::randn(iset.num_items, config.k3, 0.01, v_rng);
  }
  if (features) bank.text = *features;

  AdamState st_u = AdamState::like(bank.U);
  AdamState st_v = AdamState::like(bank.V);

  CfResult result;
  result.best = bank;
  result.best_val_f1 = -1.0;

  CfGradients grads;
  for (std::size_t epoch = 0; epoch < config.max_iters; ++epoch) {
    Batch epoch_batch = assemble_epoch(
        train_pairs, user_train, iset.num_items, config.rho,
        root.fork("epoch").fork(epoch),
        kind == CfKind::wtcf ? &neg_w : nullptr);
    for (std::size_t beg = 0; beg < epoch_batch.size();
         beg += config.batch_size) {
      std::size_t end = std::min(beg + config.batch_size, epoch_batch.size());
      Batch batch(epoch_batch.begin() + static_cast<std::ptrdiff_t>(beg),
                  epoch_batch.begin() + static_cast<std::ptrdiff_t>(end));
      double loss = cf_loss_and_gradients(batch, bank, config.lambda, &grads);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_cf: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      adam_step(bank.U, grads.U, st_u, config.lr);
      adam_step(bank.V, grads.V, st_v, config.lr);
    }

    auto scorer = [&](std::uint32_t u, std::span<double> out) {
      for (std::uint32_t i = 0; i < iset.num_items; ++i)
        out[i] = cf_score(u, i, bank);
    };
    auto report = evaluate_ranking(data, SplitPart::validation, scorer, {2},
                                   CandidatePolicy::exclude_train,
                                   cf_kind_name(kind), config.seed);
    double f1 = report.at_k(2).f1;
    result.val_f1_trace.push_back(f1);
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      result.best = bank;
    }
  }
  result.last = std::move(bank);
  return result;
}

}  // namespace xdr
