#include "xdr/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xdr/eval.hpp"
#include "xdr/kernels.hpp"

namespace xdr {

double InteractionFunction::score(std::span<const double> a,
                                  std::span<const double> b) const {
  if (a.size() != b.size())
    throw std::invalid_argument("interaction: representation widths differ");
  return kernels::dot(a.data(), b.data(), a.size());
}

DomainClassifier DomainClassifier::init(std::size_t input_width,
                                        std::vector<std::size_t> hidden,
                                        SplitRng rng) {
  DomainClassifier phi;
  std::vector<std::size_t> widths;
  widths.push_back(input_width);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    auto w_rng = rng.fork("W").fork(l);
    phi.W.push_back(Matrix::randn(widths[l], widths[l + 1], 0.1, w_rng));
    phi.b.emplace_back(1, widths[l + 1], 0.0);
  }
  return phi;
}

ClassifierGradients ClassifierGradients::like(const DomainClassifier& phi) {
  ClassifierGradients g;
  for (const auto& w : phi.W) g.W.emplace_back(w.rows, w.cols);
  for (const auto& bb : phi.b) g.b.emplace_back(bb.rows, bb.cols);
  return g;
}

void ClassifierGradients::clear() {
  for (auto& m : W) m.fill(0.0);
  for (auto& m : b) m.fill(0.0);
}

namespace {

struct ForwardTrace {
  // acts[0] is the input; acts[l+1] the post-activation of layer l.
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<double>> pre;  // pre-activations per layer
  double logit = 0.0;
};

ForwardTrace classifier_run(std::span<const double> x,
                            const DomainClassifier& phi) {
  if (x.size() != phi.input_width())
    throw std::invalid_argument("classifier: input width mismatch");
  ForwardTrace tr;
  tr.acts.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < phi.W.size(); ++l) {
    const Matrix& w = phi.W[l];
    std::vector<double> z(w.cols);
    for (std::size_t o = 0; o < w.cols; ++o) z[o] = phi.b[l].at(0, o);
    const auto& h = tr.acts.back();
    for (std::size_t in = 0; in < w.rows; ++in) {
      if (h[in] != 0.0) kernels::axpy(h[in], w.row(in).data(), z.data(), w.cols);
    }
    tr.pre.push_back(z);
    if (l + 1 < phi.W.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;  // ReLU
      tr.acts.push_back(std::move(z));
    } else {
      tr.logit = z[0];
    }
  }
  return tr;
}

}  // namespace

double classifier_forward(std::span<const double> x,
                          const DomainClassifier& phi) {
  return sigmoid(classifier_run(x, phi).logit);
}

ClassifierBackward classifier_backward(std::span<const double> x,
                                       const DomainClassifier& phi,
                                       double label,
                                       ClassifierGradients* grads) {
  ForwardTrace tr = classifier_run(x, phi);
  ClassifierBackward out;
  out.prob = sigmoid(tr.logit);
  out.loss = binary_cross_entropy(out.prob, label, 1.0);

  std::vector<double> dz{out.prob - label};
  for (std::size_t l = phi.W.size(); l-- > 0;) {
    const Matrix& w = phi.W[l];
    const auto& h = tr.acts[l];
    if (grads) {
      for (std::size_t o = 0; o < w.cols; ++o) grads->b[l].at(0, o) += dz[o];
      for (std::size_t in = 0; in < w.rows; ++in) {
        if (h[in] != 0.0)
          kernels::axpy(h[in], dz.data(), grads->W[l].row(in).data(), w.cols);
      }
    }
    std::vector<double> dh(w.rows, 0.0);
    for (std::size_t in = 0; in < w.rows; ++in)
      dh[in] = kernels::dot(w.row(in).data(), dz.data(), w.cols);
    if (l > 0) {
      // Through the ReLU of the previous layer.
      for (std::size_t in = 0; in < dh.size(); ++in)
        if (tr.pre[l - 1][in] <= 0.0) dh[in] = 0.0;
    }
    dz = std::move(dh);
  }
  out.dx = std::move(dz);
  return out;
}

namespace {

double domain_pass(const Matrix& source_rows, const Matrix& target_rows,
                   const DomainClassifier& phi, ClassifierGradients* grads,
                   Matrix* d_src, Matrix* d_tgt) {
  if (source_rows.rows == 0 || target_rows.rows == 0)
    throw std::runtime_error("unbalanced adversarial batch");
  if (d_src) *d_src = Matrix(source_rows.rows, source_rows.cols);
  if (d_tgt) *d_tgt = Matrix(target_rows.rows, target_rows.cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < source_rows.rows; ++r) {
    auto bw = classifier_backward(source_rows.row(r), phi, 0.0, grads);
    loss += bw.loss;
    if (d_src) std::copy(bw.dx.begin(), bw.dx.end(), d_src->row(r).begin());
  }
  for (std::size_t r = 0; r < target_rows.rows; ++r) {
    auto bw = classifier_backward(target_rows.row(r), phi, 1.0, grads);
    loss += bw.loss;
    if (d_tgt) std::copy(bw.dx.begin(), bw.dx.end(), d_tgt->row(r).begin());
  }
  return loss;
}

}  // namespace

double domain_loss(const Matrix& source_rows, const Matrix& target_rows,
                   const DomainClassifier& phi) {
  return domain_pass(source_rows, target_rows, phi, nullptr, nullptr, nullptr);
}

double domain_loss_and_gradients(const Matrix& source_rows,
                                 const Matrix& target_rows,
                                 const DomainClassifier& phi,
                                 ClassifierGradients* grads,
                                 Matrix* d_source_rows, Matrix* d_target_rows) {
  return domain_pass(source_rows, target_rows, phi, grads, d_source_rows,
                     d_target_rows);
}

double tdar_predict(const DualDomainState& state, bool target_domain,
                    std::uint32_t u, std::uint32_t i) {
  const RepresentationBank& bank = target_domain ? state.target : state.source;
  std::vector<double> a(bank.U.row(u).begin(), bank.U.row(u).end());
  a.insert(a.end(), bank.text->user.row(u).begin(),
           bank.text->user.row(u).end());
  std::vector<double> b(bank.V.row(i).begin(), bank.V.row(i).end());
  b.insert(b.end(), bank.text->item.row(i).begin(),
           bank.text->item.row(i).end());
  return sigmoid(state.theta->score(a, b));
}

Matrix representation_rows(const RepresentationBank& bank, Side side,
                           std::span<const std::uint32_t> entities) {
  if (!bank.text)
    throw std::invalid_argument("representation_rows: bank has no features");
  const Matrix& emb = side == Side::user ? bank.U : bank.V;
  const Matrix& feat = side == Side::user ? bank.text->user : bank.text->item;
  Matrix rows(entities.size(), emb.cols + feat.cols);
  for (std::size_t r = 0; r < entities.size(); ++r) {
    auto e = entities[r];
    std::copy(emb.row(e).begin(), emb.row(e).end(), rows.row(r).begin());
    std::copy(feat.row(e).begin(), feat.row(e).end(),
              rows.row(r).begin() + static_cast<std::ptrdiff_t>(emb.cols));
  }
  return rows;
}

namespace {

void require_positive_only(const Batch& target_batch) {
  for (const auto& ex : target_batch) {
    if (ex.label != 1.0)
      throw std::runtime_error(
          "protocol violation: negative label in target batch");
  }
}

}  // namespace

std::pair<double, double> prediction_losses(const Batch& source_batch,
                                            const Batch& target_batch,
                                            const DualDomainState& state,
                                            double lambda_s, double lambda_t) {
  require_positive_only(target_batch);
  double ls = cf_loss(source_batch, state.source, lambda_s);
  double lt = cf_loss(target_batch, state.target, lambda_t);
  return {ls, lt};
}

TdarOptimizer TdarOptimizer::like(const DualDomainState& state, bool use_adam) {
  TdarOptimizer opt;
  opt.use_adam = use_adam;
  opt.us = AdamState::like(state.source.U);
  opt.vs = AdamState::like(state.source.V);
  opt.ut = AdamState::like(state.target.U);
  opt.vt = AdamState::like(state.target.V);
  for (const auto& w : state.phi_user.W) opt.phi_u_w.push_back(AdamState::like(w));
  for (const auto& b : state.phi_user.b) opt.phi_u_b.push_back(AdamState::like(b));
  for (const auto& w : state.phi_item.W) opt.phi_i_w.push_back(AdamState::like(w));
  for (const auto& b : state.phi_item.b) opt.phi_i_b.push_back(AdamState::like(b));
  return opt;
}

namespace {

// The update equations carry the learning rates inside the step; Adam needs
// a single group rate, so the combined gradient is rescaled by the group's
// leading rate. With only one term active this is exactly an Adam step at
// that term's rate; with eta_minus = 0 it reduces to a plain TCF step.
void update_group(Matrix& param, const Matrix& descend, double descend_rate,
                  const Matrix* ascend, double ascend_rate, AdamState& st,
                  bool use_adam, const char* group) {
  double lr = descend_rate > 0.0 ? descend_rate : ascend_rate;
  if (lr <= 0.0) return;
  Matrix combined(param.rows, param.cols);
  if (descend_rate > 0.0)
    kernels::axpy(descend_rate, descend.data.data(), combined.data.data(),
                  combined.size());
  if (ascend && ascend_rate > 0.0)
    kernels::axpy(-ascend_rate, ascend->data.data(), combined.data.data(),
                  combined.size());
  if (use_adam) {
    kernels::scale(combined.data.data(), 1.0 / lr, combined.size());
    adam_step(param, combined, st, lr);
  } else {
    kernels::axpy(-1.0, combined.data.data(), param.data.data(), param.size());
  }
  if (!param.all_finite())
    throw std::runtime_error(std::string("tdar update produced NaN in group ") +
                             group);
}

void update_classifier(DomainClassifier& phi, const ClassifierGradients& g,
                       double lr, std::vector<AdamState>& st_w,
                       std::vector<AdamState>& st_b, bool use_adam,
                       const char* group) {
  if (lr <= 0.0) return;
  for (std::size_t l = 0; l < phi.W.size(); ++l) {
    if (use_adam) {
      adam_step(phi.W[l], g.W[l], st_w[l], lr);
      adam_step(phi.b[l], g.b[l], st_b[l], lr);
    } else {
      sgd_step(phi.W[l], g.W[l], lr);
      sgd_step(phi.b[l], g.b[l], lr);
    }
    if (!phi.W[l].all_finite() || !phi.b[l].all_finite())
      throw std::runtime_error(
          std::string("tdar update produced NaN in group ") + group);
  }
}

// Scatter-add the embedding block of per-row input gradients back onto the
// touched embedding rows; the feature block stays where it falls (frozen).
void scatter_embedding_grads(const Matrix& d_rows,
                             std::span<const std::uint32_t> entities,
                             std::size_t k3, Matrix& out) {
  for (std::size_t r = 0; r < d_rows.rows; ++r)
    kernels::axpy(1.0, d_rows.row(r).data(), out.row(entities[r]).data(), k3);
}

}  // namespace

TdarStepInfo tdar_update_step(DualDomainState& state, const TdarBatches& batches,
                              const TdarRates& rates, double lambda_s,
                              double lambda_t, TdarOptimizer& opt) {
  require_positive_only(batches.target);
  TdarStepInfo info;
  std::size_t k3 = state.source.k3();

  // All gradients are taken at the pre-step parameters.
  CfGradients gs, gt;
  info.loss_source =
      cf_loss_and_gradients(batches.source, state.source, lambda_s, &gs);
  info.loss_target =
      cf_loss_and_gradients(batches.target, state.target, lambda_t, &gt);

  ClassifierGradients gu = ClassifierGradients::like(state.phi_user);
  ClassifierGradients gi = ClassifierGradients::like(state.phi_item);
  Matrix d_su, d_tu, d_si, d_ti;
  {
    Matrix src_rows =
        representation_rows(state.source, Side::user, batches.source_users);
    Matrix tgt_rows =
        representation_rows(state.target, Side::user, batches.target_users);
    info.loss_user_domain = domain_loss_and_gradients(
        src_rows, tgt_rows, state.phi_user, &gu, &d_su, &d_tu);
  }
  {
    Matrix src_rows =
        representation_rows(state.source, Side::item, batches.source_items);
    Matrix tgt_rows =
        representation_rows(state.target, Side::item, batches.target_items);
    info.loss_item_domain = domain_loss_and_gradients(
        src_rows, tgt_rows, state.phi_item, &gi, &d_si, &d_ti);
  }

  Matrix adv_us(state.source.U.rows, k3), adv_vs(state.source.V.rows, k3);
  Matrix adv_ut(state.target.U.rows, k3), adv_vt(state.target.V.rows, k3);
  scatter_embedding_grads(d_su, batches.source_users, k3, adv_us);
  scatter_embedding_grads(d_tu, batches.target_users, k3, adv_ut);
  scatter_embedding_grads(d_si, batches.source_items, k3, adv_vs);
  scatter_embedding_grads(d_ti, batches.target_items, k3, adv_vt);

  update_group(state.source.U, gs.U, rates.eta_s, &adv_us, rates.eta_minus,
               opt.us, opt.use_adam, "source.U");
  update_group(state.source.V, gs.V, rates.eta_s, &adv_vs, rates.eta_minus,
               opt.vs, opt.use_adam, "source.V");
  update_group(state.target.U, gt.U, rates.eta_t, &adv_ut, rates.eta_minus,
               opt.ut, opt.use_adam, "target.U");
  update_group(state.target.V, gt.V, rates.eta_t, &adv_vt, rates.eta_minus,
               opt.vt, opt.use_adam, "target.V");
  update_classifier(state.phi_user, gu, rates.eta_plus, opt.phi_u_w,
                    opt.phi_u_b, opt.use_adam, "phi_user");
  update_classifier(state.phi_item, gi, rates.eta_plus, opt.phi_i_w,
                    opt.phi_i_b, opt.use_adam, "phi_item");
  return info;
}

TdarStage tdar_stage_from_name(const std::string& name) {
  if (name == "classifier") return TdarStage::classifier;
  if (name == "align") return TdarStage::align;
  if (name == "full") return TdarStage::full;
  throw std::invalid_argument("unknown stage '" + name +
                              "' (want classifier|align|full)");
}

const char* tdar_stage_name(TdarStage s) {
  switch (s) {
    case TdarStage::classifier: return "classifier";
    case TdarStage::align: return "align";
    case TdarStage::full: return "full";
  }
  throw std::logic_error("bad stage");
}

double classifier_accuracy(const DomainClassifier& phi,
                           const Matrix& source_rows, const Matrix& target_rows) {
  if (source_rows.rows + target_rows.rows == 0)
    throw std::invalid_argument("classifier_accuracy: no rows");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < source_rows.rows; ++r)
    if (classifier_forward(source_rows.row(r), phi) < 0.5) ++correct;
  for (std::size_t r = 0; r < target_rows.rows; ++r)
    if (classifier_forward(target_rows.row(r), phi) >= 0.5) ++correct;
  return static_cast<double>(correct) /
         static_cast<double>(source_rows.rows + target_rows.rows);
}

namespace {

std::vector<IndexPair> train_positives(const DatasetBundle& b) {
  std::vector<IndexPair> out;
  for (std::size_t p = 0; p < b.iset.positives.size(); ++p)
    if (b.split.assignment[p] == static_cast<std::uint8_t>(SplitPart::train))
      out.push_back(b.iset.positives[p]);
  return out;
}

// Seeded 20% held-out entity rows per domain and side; the rest feed the
// adversarial batches.
void split_entities(std::size_t count, SplitRng rng,
                    std::vector<std::uint32_t>* heldout,
                    std::vector<std::uint32_t>* pool) {
  std::vector<std::uint32_t> ids(count);
  for (std::size_t i = 0; i < count; ++i) ids[i] = static_cast<std::uint32_t>(i);
  rng.shuffle(ids);
  std::size_t nh = std::max<std::size_t>(1, count / 5);
  heldout->assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(nh));
  pool->assign(ids.begin() + static_cast<std::ptrdiff_t>(nh), ids.end());
  std::sort(heldout->begin(), heldout->end());
  std::sort(pool->begin(), pool->end());
}

std::vector<std::uint32_t> draw_rows(const std::vector<std::uint32_t>& pool,
                                     std::size_t n, SplitRng& rng) {
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = pool[rng.next_below(pool.size())];
  return out;
}

}  // namespace

TdarResult train_tdar(const DatasetBundle& source, const DatasetBundle& target,
                      const TextualFeatures& source_features,
                      const TextualFeatures& target_features,
                      const RepresentationBank* pretrained_source,
                      const TdarConfig& config, const TdarInit& init) {
  if (source_features.user.cols != target_features.user.cols)
    throw std::runtime_error("train_tdar: feature widths differ across domains");
  if (source_features.user.rows != source.iset.num_users ||
      source_features.item.rows != source.iset.num_items ||
      target_features.user.rows != target.iset.num_users ||
      target_features.item.rows != target.iset.num_items)
    throw std::runtime_error("train_tdar: features do not match bundles");
  if (config.rho == 0)
    throw std::invalid_argument(
        "train_tdar: source domain requires negative sampling (rho >= 1)");

  auto src_pairs = train_positives(source);
  auto tgt_pairs = train_positives(target);
  if (src_pairs.empty() || tgt_pairs.empty())
    throw std::runtime_error("train_tdar: a domain has no training pairs");

  SplitRng root(config.seed);

  DualDomainState state;
  if (init.state) {
    state = *init.state;
    if (!state.theta) state.theta = std::make_shared<InteractionFunction>();
    if (!state.source.text || !state.target.text ||
        !bitwise_equal(state.source.text->user, source_features.user) ||
        !bitwise_equal(state.source.text->item, source_features.item) ||
        !bitwise_equal(state.target.text->user, target_features.user) ||
        !bitwise_equal(state.target.text->item, target_features.item))
      throw std::runtime_error(
          "train_tdar: warm-start state carries different frozen features");
  } else {
    state.theta = std::make_shared<InteractionFunction>();
    if (pretrained_source) {
      if (pretrained_source->U.rows != source.iset.num_users ||
          pretrained_source->V.rows != source.iset.num_items ||
          pretrained_source->U.cols != config.k3)
        throw std::runtime_error(
            "train_tdar: pretrained source bank does not match");
      state.source.U = pretrained_source->U;
      state.source.V = pretrained_source->V;
    } else {
      auto u_rng = root.fork("init").fork("Us");
      auto v_rng = root.fork("init").fork("Vs");
      state.source.U = Matrix::randn(source.iset.num_users, config.k3, 0.01, u_rng);
      state.source.V = Matrix::randn(source.iset.num_items, config.k3, 0.01, v_rng);
    }
    auto u_rng = root.fork("init").fork("Ut");
    auto v_rng = root.fork("init").fork("Vt");
    state.target.U = Matrix::randn(target.iset.num_users, config.k3, 0.01, u_rng);
    state.target.V = Matrix::randn(target.iset.num_items, config.k3, 0.01, v_rng);
    state.source.text = source_features;
    state.target.text = target_features;

    std::size_t width = config.k3 + source_features.user.cols;
    state.phi_user = DomainClassifier::init(width, {64, 64, 64},
                                            root.fork("phi_user"));
    state.phi_item = DomainClassifier::init(width, {64, 64, 64},
                                            root.fork("phi_item"));
  }

  TdarRates rates;
  switch (config.stage) {
    case TdarStage::classifier:
      rates = {0.0, 0.0, config.eta_plus, 0.0};
      break;
    case TdarStage::align:
      rates = {0.0, 0.0, config.eta_plus, config.eta_minus};
      break;
    case TdarStage::full:
      rates = {config.eta_s, config.eta_t, config.eta_plus, config.eta_minus};
      break;
  }

  TdarResult result;
  std::vector<std::uint32_t> pool_su, pool_tu, pool_si, pool_ti;
  split_entities(source.iset.num_users, root.fork("heldout").fork("su"),
                 &result.heldout_source_users, &pool_su);
  split_entities(target.iset.num_users, root.fork("heldout").fork("tu"),
                 &result.heldout_target_users, &pool_tu);
  split_entities(source.iset.num_items, root.fork("heldout").fork("si"),
                 &result.heldout_source_items, &pool_si);
  split_entities(target.iset.num_items, root.fork("heldout").fork("ti"),
                 &result.heldout_target_items, &pool_ti);

  auto src_user_train = source.items_by_user(SplitPart::train);
  TdarOptimizer opt =
      init.opt ? *init.opt : TdarOptimizer::like(state, config.use_adam);

  result.best = state;
  result.best_val_f1 = -1.0;

  for (std::size_t epoch = init.epochs_done; epoch < config.max_iters;
       ++epoch) {
    SplitRng epoch_rng = root.fork("epoch").fork(epoch);
    Batch src_epoch =
        assemble_epoch(src_pairs, src_user_train, source.iset.num_items,
                       config.rho, epoch_rng.fork("source"), nullptr);

    // Target positives are cycled in a per-epoch shuffled order, and each
    // step draws as many of them as the source batch holds positives.
    std::vector<std::size_t> tgt_order(tgt_pairs.size());
    for (std::size_t p = 0; p < tgt_order.size(); ++p) tgt_order[p] = p;
    auto tgt_rng = epoch_rng.fork("target");
    tgt_rng.shuffle(tgt_order);
    std::size_t tgt_cursor = 0;

    SplitRng adv_root = epoch_rng.fork("adv");
    std::size_t step = 0;
    for (std::size_t beg = 0; beg < src_epoch.size();
         beg += config.batch_size, ++step) {
      std::size_t end = std::min(beg + config.batch_size, src_epoch.size());
      TdarBatches batches;
      batches.source.assign(
          src_epoch.begin() + static_cast<std::ptrdiff_t>(beg),
          src_epoch.begin() + static_cast<std::ptrdiff_t>(end));
      std::size_t n_pos = 0;
      for (const auto& ex : batches.source)
        if (ex.label == 1.0) ++n_pos;
      for (std::size_t j = 0; j < n_pos; ++j) {
        auto [u, i] = tgt_pairs[tgt_order[tgt_cursor]];
        tgt_cursor = (tgt_cursor + 1) % tgt_order.size();
        batches.target.push_back({u, i, 1.0, 1.0});
      }
      SplitRng step_rng = adv_root.fork(step);
      auto r_su = step_rng.fork("su");
      auto r_tu = step_rng.fork("tu");
      auto r_si = step_rng.fork("si");
      auto r_ti = step_rng.fork("ti");
      batches.source_users = draw_rows(pool_su, config.adv_rows, r_su);
      batches.target_users = draw_rows(pool_tu, config.adv_rows, r_tu);
      batches.source_items = draw_rows(pool_si, config.adv_rows, r_si);
      batches.target_items = draw_rows(pool_ti, config.adv_rows, r_ti);

      tdar_update_step(state, batches, rates, config.lambda_s, config.lambda_t,
                       opt);
    }

    result.user_acc_trace.push_back(classifier_accuracy(
        state.phi_user,
        representation_rows(state.source, Side::user,
                            result.heldout_source_users),
        representation_rows(state.target, Side::user,
                            result.heldout_target_users)));
    result.item_acc_trace.push_back(classifier_accuracy(
        state.phi_item,
        representation_rows(state.source, Side::item,
                            result.heldout_source_items),
        representation_rows(state.target, Side::item,
                            result.heldout_target_items)));

    if (config.stage == TdarStage::full) {
      auto scorer = [&](std::uint32_t u, std::span<double> out) {
        for (std::uint32_t i = 0; i < target.iset.num_items; ++i)
          out[i] = cf_score(u, i, state.target);
      };
      auto report = evaluate_ranking(target, SplitPart::validation, scorer,
                                     {2}, CandidatePolicy::exclude_train,
                                     "tdar", config.seed);
      double f1 = report.at_k(2).f1;
      result.target_val_f1_trace.push_back(f1);
      if (f1 > result.best_val_f1) {
        result.best_val_f1 = f1;
        result.best_epoch = epoch;
        result.best = state;
      }
    }
  }

  if (config.stage != TdarStage::full || result.best_val_f1 < 0.0) {
    result.best = state;
    result.best_epoch = config.max_iters == 0 ? 0 : config.max_iters - 1;
  }
  result.last = std::move(state);
  result.last_opt = std::move(opt);
  result.epochs_done = std::max(config.max_iters, init.epochs_done);
  return result;
}

Checkpoint tdar_to_checkpoint(const DualDomainState& state,
                              const TdarOptimizer& opt,
                              std::size_t epochs_done,
                              const std::string& config_echo,
                              std::uint64_t seed) {
  Checkpoint c;
  c.kind = "tdar";
  c.config_echo = config_echo;
  c.seed = seed;
  c.add("source.U", state.source.U);
  c.add("source.V", state.source.V);
  c.add("source.E", state.source.text->user);
  c.add("source.F", state.source.text->item);
  c.add("target.U", state.target.U);
  c.add("target.V", state.target.V);
  c.add("target.E", state.target.text->user);
  c.add("target.F", state.target.text->item);
  auto add_phi = [&](const std::string& prefix, const DomainClassifier& phi) {
    for (std::size_t l = 0; l < phi.W.size(); ++l) {
      c.add(prefix + ".W" + std::to_string(l), phi.W[l]);
      c.add(prefix + ".b" + std::to_string(l), phi.b[l]);
    }
  };
  add_phi("phi_user", state.phi_user);
  add_phi("phi_item", state.phi_item);
  auto add_adam = [&](const std::string& name, const AdamState& st) {
    c.add("adam." + name + ".m", st.m);
    c.add("adam." + name + ".v", st.v);
    Matrix t(1, 1);
    t.at(0, 0) = static_cast<double>(st.t);
    c.add("adam." + name + ".t", t);
  };
  add_adam("us", opt.us);
  add_adam("vs", opt.vs);
  add_adam("ut", opt.ut);
  add_adam("vt", opt.vt);
  for (std::size_t l = 0; l < opt.phi_u_w.size(); ++l) {
    add_adam("phi_u.W" + std::to_string(l), opt.phi_u_w[l]);
    add_adam("phi_u.b" + std::to_string(l), opt.phi_u_b[l]);
    add_adam("phi_i.W" + std::to_string(l), opt.phi_i_w[l]);
    add_adam("phi_i.b" + std::to_string(l), opt.phi_i_b[l]);
  }
  Matrix meta(1, 2);
  meta.at(0, 0) = static_cast<double>(epochs_done);
  meta.at(0, 1) = opt.use_adam ? 1.0 : 0.0;
  c.add("meta", meta);
  return c;
}

void tdar_from_checkpoint(const Checkpoint& ckpt, DualDomainState* state,
                          TdarOptimizer* opt, std::size_t* epochs_done) {
  if (ckpt.kind != "tdar")
    throw std::runtime_error("checkpoint is not a tdar checkpoint");
  state->theta = std::make_shared<InteractionFunction>();
  state->source.U = ckpt.require("source.U");
  state->source.V = ckpt.require("source.V");
  state->source.text =
      TextualFeatures{ckpt.require("source.E"), ckpt.require("source.F")};
  state->target.U = ckpt.require("target.U");
  state->target.V = ckpt.require("target.V");
  state->target.text =
      TextualFeatures{ckpt.require("target.E"), ckpt.require("target.F")};
  auto load_phi = [&](const std::string& prefix) {
    DomainClassifier phi;
    for (std::size_t l = 0;; ++l) {
      const Matrix* w = ckpt.find(prefix + ".W" + std::to_string(l));
      const Matrix* b = ckpt.find(prefix + ".b" + std::to_string(l));
      if (!w || !b) break;
      phi.W.push_back(*w);
      phi.b.push_back(*b);
    }
    if (phi.W.empty())
      throw std::runtime_error("checkpoint missing classifier " + prefix);
    return phi;
  };
  state->phi_user = load_phi("phi_user");
  state->phi_item = load_phi("phi_item");

  const Matrix& meta = ckpt.require("meta");
  if (epochs_done) *epochs_done = static_cast<std::size_t>(meta.at(0, 0));
  if (opt) {
    *opt = TdarOptimizer::like(*state, meta.at(0, 1) != 0.0);
    auto get_adam = [&](const std::string& name, AdamState& st) {
      st.m = ckpt.require("adam." + name + ".m");
      st.v = ckpt.require("adam." + name + ".v");
      st.t = static_cast<long long>(ckpt.require("adam." + name + ".t").at(0, 0));
    };
    get_adam("us", opt->us);
    get_adam("vs", opt->vs);
    get_adam("ut", opt->ut);
    get_adam("vt", opt->vt);
    for (std::size_t l = 0; l < opt->phi_u_w.size(); ++l) {
      get_adam("phi_u.W" + std::to_string(l), opt->phi_u_w[l]);
      get_adam("phi_u.b" + std::to_string(l), opt->phi_u_b[l]);
      get_adam("phi_i.W" + std::to_string(l), opt->phi_i_w[l]);
      get_adam("phi_i.b" + std::to_string(l), opt->phi_i_b[l]);
    }
  }
}

}  // namespace xdr
