#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <vector>

#include "xdr/adversary.hpp"
#include "xdr/cli_support.hpp"
#include "xdr/ops.hpp"
#include "xdr/rng.hpp"

using namespace xdr;
namespace fs = std::filesystem;

namespace {

// The literal non-adam group update: combined = dr*descend - ar*ascend,
// param -= combined (same kernel calls, same rounding).
Matrix plain_group_step(const Matrix& prev, const Matrix& descend, double dr,
                        const Matrix* ascend, double ar) {
  Matrix combined(prev.rows, prev.cols);
  if (dr > 0.0)
    kernels::axpy(dr, descend.data.data(), combined.data.data(),
                  combined.size());
  if (ascend && ar > 0.0)
    kernels::axpy(-ar, ascend->data.data(), combined.data.data(),
                  combined.size());
  Matrix out = prev;
  kernels::axpy(-1.0, combined.data.data(), out.data.data(), out.size());
  return out;
}

DualDomainState make_state(std::uint64_t seed, std::size_t ms, std::size_t ns,
                           std::size_t mt, std::size_t nt, std::size_t k3,
                           std::size_t k1, std::vector<std::size_t> hidden) {
  SplitRng rng(seed);
  DualDomainState st;
  st.theta = std::make_shared<InteractionFunction>();
  auto r = [&](const char* tag) { return rng.fork(tag); };
  auto ru = r("su"), rv = r("sv"), re = r("se"), rf = r("sf");
  st.source.U = Matrix::randn(ms, k3, 0.3, ru);
  st.source.V = Matrix::randn(ns, k3, 0.3, rv);
  st.source.text = TextualFeatures{Matrix::randn(ms, k1, 0.3, re),
                                   Matrix::randn(ns, k1, 0.3, rf)};
  auto tu = r("tu"), tv = r("tv"), te = r("te"), tf = r("tf");
  st.target.U = Matrix::randn(mt, k3, 0.3, tu);
  st.target.V = Matrix::randn(nt, k3, 0.3, tv);
  st.target.text = TextualFeatures{Matrix::randn(mt, k1, 0.3, te),
                                   Matrix::randn(nt, k1, 0.3, tf)};
  st.phi_user = DomainClassifier::init(k3 + k1, hidden, r("pu"));
  st.phi_item = DomainClassifier::init(k3 + k1, hidden, r("pi"));
  return st;
}

}  // namespace

TEST_CASE("a zero classifier answers one half and the balanced-coin loss") {
  SplitRng rng(1);
  DomainClassifier phi = DomainClassifier::init(3, {4, 4}, rng);
  for (auto& w : phi.W) w.fill(0.0);
  for (auto& b : phi.b) b.fill(0.0);

  std::vector<double> x{0.3, -1.2, 5.0};
  CHECK(classifier_forward(x, phi) == 0.5);

  Matrix src(3, 3), tgt(2, 3);
  SplitRng fill(2);
  for (auto& v : src.data) v = fill.next_gaussian(1.0);
  for (auto& v : tgt.data) v = fill.next_gaussian(1.0);
  CHECK(domain_loss(src, tgt, phi) ==
        doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-14));

  // Everything lands on "target": accuracy is the target share.
  CHECK(classifier_accuracy(phi, src, tgt) == doctest::Approx(0.4).epsilon(1e-15));

  Matrix empty(0, 3);
  CHECK_THROWS_WITH_AS(domain_loss(src, empty, phi),
                       "unbalanced adversarial batch", std::runtime_error);
  CHECK_THROWS_AS(domain_loss(empty, tgt, phi), std::runtime_error);
}

TEST_CASE("a hand-built two-layer classifier matches the forward oracle") {
  DomainClassifier phi;
  phi.W.emplace_back(2, 2);
  phi.W[0].at(0, 0) = 1.0;
  phi.W[0].at(0, 1) = -1.0;
  phi.W[0].at(1, 0) = 2.0;
  phi.W[0].at(1, 1) = 0.5;
  phi.b.emplace_back(1, 2);
  phi.b[0].at(0, 0) = 0.5;
  phi.b[0].at(0, 1) = -0.25;
  phi.W.emplace_back(2, 1);
  phi.W[1].at(0, 0) = 1.0;
  phi.W[1].at(1, 0) = -2.0;
  phi.b.emplace_back(1, 1);
  phi.b[1].at(0, 0) = 0.3;

  // x = (1, 1): pre = (3.5, -0.75), relu = (3.5, 0), logit = 3.5 + 0.3.
  std::vector<double> x{1.0, 1.0};
  double want = 1.0 / (1.0 + std::exp(-3.8));
  CHECK(classifier_forward(x, phi) == doctest::Approx(want).epsilon(1e-15));

  // x = (1, -1): both hidden units die, only the output bias survives.
  std::vector<double> dead{1.0, -1.0};
  double want2 = 1.0 / (1.0 + std::exp(-0.3));
  CHECK(classifier_forward(dead, phi) == doctest::Approx(want2).epsilon(1e-15));

  std::vector<double> wrong{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(classifier_forward(wrong, phi), std::invalid_argument);
}

TEST_CASE("classifier gradients match finite differences") {
  SplitRng rng(23);
  DomainClassifier phi = DomainClassifier::init(4, {8, 6}, rng.fork("phi"));
  Matrix x(1, 4);
  auto x_rng = rng.fork("x");
  for (auto& v : x.data) v = x_rng.next_gaussian(0.7);

  ClassifierGradients g = ClassifierGradients::like(phi);
  auto bw = classifier_backward(x.row(0), phi, 1.0, &g);
  CHECK(bw.prob == classifier_forward(x.row(0), phi));
  CHECK(bw.loss ==
        doctest::Approx(binary_cross_entropy(bw.prob, 1.0, 1.0)).epsilon(1e-15));

  SUBCASE("parameter gradients") {
    std::vector<Matrix*> params;
    std::vector<Matrix> analytic;
    for (std::size_t l = 0; l < phi.layers(); ++l) {
      params.push_back(&phi.W[l]);
      analytic.push_back(g.W[l]);
      params.push_back(&phi.b[l]);
      analytic.push_back(g.b[l]);
    }
    auto loss = [&] { return classifier_backward(x.row(0), phi, 1.0, nullptr).loss; };
    CHECK(finite_difference_check(loss, params, analytic) < 1e-5);
  }

  SUBCASE("input gradients") {
    REQUIRE(bw.dx.size() == 4);
    Matrix dx(1, 4);
    std::copy(bw.dx.begin(), bw.dx.end(), dx.data.begin());
    std::vector<Matrix*> params{&x};
    std::vector<Matrix> analytic{dx};
    auto loss = [&] { return classifier_backward(x.row(0), phi, 1.0, nullptr).loss; };
    CHECK(finite_difference_check(loss, params, analytic) < 1e-5);
  }
}

TEST_CASE("domain loss is the sum of per-row losses on both sides") {
  SplitRng rng(31);
  DomainClassifier phi = DomainClassifier::init(3, {5}, rng.fork("phi"));
  Matrix src(3, 3), tgt(4, 3);
  auto fill = rng.fork("rows");
  for (auto& v : src.data) v = fill.next_gaussian(0.8);
  for (auto& v : tgt.data) v = fill.next_gaussian(0.8);

  double manual = 0.0;
  for (std::size_t r = 0; r < src.rows; ++r)
    manual += binary_cross_entropy(classifier_forward(src.row(r), phi), 0.0, 1.0);
  for (std::size_t r = 0; r < tgt.rows; ++r)
    manual += binary_cross_entropy(classifier_forward(tgt.row(r), phi), 1.0, 1.0);
  CHECK(domain_loss(src, tgt, phi) == manual);

  // Gradients agree with finite differences through the row matrices.
  ClassifierGradients g = ClassifierGradients::like(phi);
  Matrix d_src, d_tgt;
  domain_loss_and_gradients(src, tgt, phi, &g, &d_src, &d_tgt);
  std::vector<Matrix*> params{&src, &tgt};
  std::vector<Matrix> analytic{d_src, d_tgt};
  auto loss = [&] { return domain_loss(src, tgt, phi); };
  CHECK(finite_difference_check(loss, params, analytic) < 1e-5);
}

TEST_CASE("representation rows concatenate the embedding and feature blocks") {
  SplitRng rng(5);
  RepresentationBank bank;
  auto ru = rng.fork("U"), re = rng.fork("E");
  bank.U = Matrix::randn(3, 2, 1.0, ru);
  bank.V = Matrix(2, 2);
  bank.text = TextualFeatures{Matrix::randn(3, 2, 1.0, re), Matrix(2, 2)};

  std::vector<std::uint32_t> who{2, 0};
  Matrix rows = representation_rows(bank, Side::user, who);
  REQUIRE(rows.rows == 2);
  REQUIRE(rows.cols == 4);
  CHECK(rows.at(0, 0) == bank.U.at(2, 0));
  CHECK(rows.at(0, 1) == bank.U.at(2, 1));
  CHECK(rows.at(0, 2) == bank.text->user.at(2, 0));
  CHECK(rows.at(0, 3) == bank.text->user.at(2, 1));
  CHECK(rows.at(1, 0) == bank.U.at(0, 0));
  CHECK(rows.at(1, 3) == bank.text->user.at(0, 1));

  RepresentationBank bare;
  bare.U = Matrix(3, 2);
  bare.V = Matrix(2, 2);
  CHECK_THROWS_AS(representation_rows(bare, Side::user, who),
                  std::invalid_argument);
}

TEST_CASE("prediction losses wrap the cf losses and enforce the protocol") {
  DualDomainState st = make_state(71, 4, 3, 4, 3, 2, 2, {5});
  Batch src{{0, 0, 1.0, 1.0}, {1, 2, 0.0, 1.0}};
  Batch tgt{{2, 1, 1.0, 1.0}, {3, 0, 1.0, 1.0}};

  auto [ls, lt] = prediction_losses(src, tgt, st, 0.01, 0.2);
  CHECK(ls == cf_loss(src, st.source, 0.01));
  CHECK(lt == cf_loss(tgt, st.target, 0.2));

  Batch bad = tgt;
  bad.push_back({0, 0, 0.0, 1.0});
  CHECK_THROWS_WITH_AS(prediction_losses(src, bad, st, 0.01, 0.2),
                       "protocol violation: negative label in target batch",
                       std::runtime_error);

  // tdar_predict scores the concatenated representation.
  double direct = cf_predict(2, 1, st.target);
  CHECK(tdar_predict(st, true, 2, 1) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(tdar_predict(st, false, 0, 0) ==
        doctest::Approx(cf_predict(0, 0, st.source)).epsilon(1e-12));
}

TEST_CASE("one plain update step transcribes the coupled equations") {
  DualDomainState state = make_state(101, 4, 3, 5, 4, 2, 2, {5});
  DualDomainState before = state;  // pre-step snapshot (deep copies)

  TdarBatches b;
  b.source = {{0, 0, 1.0, 1.0}, {1, 1, 0.0, 1.0}, {2, 2, 1.0, 1.0},
              {0, 1, 0.0, 1.0}};
  b.target = {{1, 0, 1.0, 1.0}, {4, 3, 1.0, 1.0}, {2, 2, 1.0, 1.0}};
  b.source_users = {0, 2};
  b.target_users = {1, 3};
  b.source_items = {1, 0};
  b.target_items = {2, 0};

  TdarRates rates{0.03, 0.02, 0.01, 0.005};
  const double ls = 0.01, lt = 0.1;
  TdarOptimizer opt = TdarOptimizer::like(state, /*use_adam=*/false);
  TdarStepInfo info = tdar_update_step(state, b, rates, ls, lt, opt);

  // Re-derive every quantity from the snapshot.
  CfGradients gs, gt;
  CHECK(info.loss_source == cf_loss_and_gradients(b.source, before.source, ls, &gs));
  CHECK(info.loss_target == cf_loss_and_gradients(b.target, before.target, lt, &gt));

  ClassifierGradients gu = ClassifierGradients::like(before.phi_user);
  ClassifierGradients gi = ClassifierGradients::like(before.phi_item);
  Matrix d_su, d_tu, d_si, d_ti;
  CHECK(info.loss_user_domain ==
        domain_loss_and_gradients(
            representation_rows(before.source, Side::user, b.source_users),
            representation_rows(before.target, Side::user, b.target_users),
            before.phi_user, &gu, &d_su, &d_tu));
  CHECK(info.loss_item_domain ==
        domain_loss_and_gradients(
            representation_rows(before.source, Side::item, b.source_items),
            representation_rows(before.target, Side::item, b.target_items),
            before.phi_item, &gi, &d_si, &d_ti));

  std::size_t k3 = 2;
  auto scatter = [&](const Matrix& d_rows,
                     const std::vector<std::uint32_t>& who, std::size_t rows) {
    Matrix out(rows, k3);
    for (std::size_t r = 0; r < d_rows.rows; ++r)
      kernels::axpy(1.0, d_rows.row(r).data(), out.row(who[r]).data(), k3);
    return out;
  };

  Matrix adv_us = scatter(d_su, b.source_users, 4);
  Matrix adv_ut = scatter(d_tu, b.target_users, 5);
  Matrix adv_vs = scatter(d_si, b.source_items, 3);
  Matrix adv_vt = scatter(d_ti, b.target_items, 4);
  CHECK(bitwise_equal(state.source.U,
                      plain_group_step(before.source.U, gs.U, rates.eta_s,
                                       &adv_us, rates.eta_minus)));
  CHECK(bitwise_equal(state.source.V,
                      plain_group_step(before.source.V, gs.V, rates.eta_s,
                                       &adv_vs, rates.eta_minus)));
  CHECK(bitwise_equal(state.target.U,
                      plain_group_step(before.target.U, gt.U, rates.eta_t,
                                       &adv_ut, rates.eta_minus)));
  CHECK(bitwise_equal(state.target.V,
                      plain_group_step(before.target.V, gt.V, rates.eta_t,
                                       &adv_vt, rates.eta_minus)));

  // Classifiers take a plain descending step at eta_plus.
  for (std::size_t l = 0; l < before.phi_user.layers(); ++l) {
    Matrix w = before.phi_user.W[l];
    sgd_step(w, gu.W[l], rates.eta_plus);
    CHECK(bitwise_equal(state.phi_user.W[l], w));
    Matrix bb = before.phi_user.b[l];
    sgd_step(bb, gu.b[l], rates.eta_plus);
    CHECK(bitwise_equal(state.phi_user.b[l], bb));
    Matrix wi = before.phi_item.W[l];
    sgd_step(wi, gi.W[l], rates.eta_plus);
    CHECK(bitwise_equal(state.phi_item.W[l], wi));
  }

  // Frozen blocks stay bitwise frozen.
  CHECK(bitwise_equal(state.source.text->user, before.source.text->user));
  CHECK(bitwise_equal(state.target.text->item, before.target.text->item));
}

TEST_CASE("zero rates decouple the update into its pieces") {
  TdarBatches b;
  b.source = {{0, 0, 1.0, 1.0}, {1, 1, 0.0, 1.0}};
  b.target = {{1, 0, 1.0, 1.0}};
  b.source_users = {0, 1};
  b.target_users = {0, 2};
  b.source_items = {0, 1};
  b.target_items = {1, 0};

  SUBCASE("classifier-only updates leave every embedding untouched") {
    DualDomainState state = make_state(7, 3, 2, 3, 2, 2, 2, {4});
    DualDomainState before = state;
    TdarOptimizer opt = TdarOptimizer::like(state, false);
    tdar_update_step(state, b, {0.0, 0.0, 0.01, 0.0}, 0.01, 0.1, opt);
    CHECK(bitwise_equal(state.source.U, before.source.U));
    CHECK(bitwise_equal(state.source.V, before.source.V));
    CHECK(bitwise_equal(state.target.U, before.target.U));
    CHECK(bitwise_equal(state.target.V, before.target.V));
    CHECK_FALSE(bitwise_equal(state.phi_user.W[0], before.phi_user.W[0]));
  }

  SUBCASE("prediction-only updates ignore the adversarial gradients") {
    DualDomainState state = make_state(7, 3, 2, 3, 2, 2, 2, {4});
    DualDomainState before = state;
    TdarOptimizer opt = TdarOptimizer::like(state, false);
    tdar_update_step(state, b, {0.03, 0.02, 0.0, 0.0}, 0.01, 0.1, opt);

    CfGradients gs, gt;
    cf_loss_and_gradients(b.source, before.source, 0.01, &gs);
    cf_loss_and_gradients(b.target, before.target, 0.1, &gt);
    CHECK(bitwise_equal(state.source.U,
                        plain_group_step(before.source.U, gs.U, 0.03, nullptr,
                                         0.0)));
    CHECK(bitwise_equal(state.target.U,
                        plain_group_step(before.target.U, gt.U, 0.02, nullptr,
                                         0.0)));
    CHECK(bitwise_equal(state.target.V,
                        plain_group_step(before.target.V, gt.V, 0.02, nullptr,
                                         0.0)));
    CHECK(bitwise_equal(state.phi_user.W[0], before.phi_user.W[0]));
    CHECK(bitwise_equal(state.phi_item.W[1], before.phi_item.W[1]));
  }

  SUBCASE("stage names round trip") {
    CHECK(tdar_stage_from_name("classifier") == TdarStage::classifier);
    CHECK(tdar_stage_from_name("align") == TdarStage::align);
    CHECK(tdar_stage_from_name("full") == TdarStage::full);
    CHECK(std::string(tdar_stage_name(TdarStage::align)) == "align");
    CHECK_THROWS_AS(tdar_stage_from_name("warmup"), std::invalid_argument);
  }
}

TEST_CASE("tdar training is resumable bitwise and shares theta") {
  DatasetBundle src = make_toy_bundle(14, 10, 12, 4, 0.5, 301);
  DatasetBundle tgt = make_toy_bundle(12, 9, 12, 4, 0.4, 302);
  SplitRng frng(303);
  auto mk = [&](std::size_t rows, std::size_t cols, const char* tag) {
    auto r = frng.fork(tag);
    Matrix m = Matrix::randn(rows, cols, 0.2, r);
    quantize_f32(m);
    return m;
  };
  TextualFeatures feat_s{mk(src.iset.num_users, 4, "se"),
                         mk(src.iset.num_items, 4, "sf")};
  TextualFeatures feat_t{mk(tgt.iset.num_users, 4, "te"),
                         mk(tgt.iset.num_items, 4, "tf")};

  TdarConfig cfg;
  cfg.k3 = 3;
  cfg.eta_s = 0.01;
  cfg.eta_t = 0.01;
  cfg.eta_plus = 0.005;
  cfg.eta_minus = 0.002;
  cfg.rho = 1;
  cfg.batch_size = 32;
  cfg.max_iters = 3;
  cfg.adv_rows = 4;
  cfg.seed = 73;

  TdarResult full = train_tdar(src, tgt, feat_s, feat_t, nullptr, cfg);
  CHECK(full.epochs_done == 3);
  CHECK(full.target_val_f1_trace.size() == 3);
  CHECK(full.user_acc_trace.size() == 3);
  CHECK(full.item_acc_trace.size() == 3);
  CHECK(full.best.theta.get() == full.last.theta.get());  // shared, not copied
  CHECK(std::is_sorted(full.heldout_source_users.begin(),
                       full.heldout_source_users.end()));
  CHECK(full.heldout_target_users.size() ==
        std::max<std::size_t>(1, tgt.iset.num_users / 5));

  SUBCASE("interrupted and resumed training matches the straight run") {
    TdarConfig half = cfg;
    half.max_iters = 2;
    TdarResult part = train_tdar(src, tgt, feat_s, feat_t, nullptr, half);
    CHECK(part.epochs_done == 2);

    // Through the checkpoint file, as a resume would actually happen.
    Checkpoint ck = tdar_to_checkpoint(part.last, part.last_opt,
                                       part.epochs_done, "echo", cfg.seed);
    auto path = (fs::temp_directory_path() / "xdr_test_tdar.ckpt").string();
    save_checkpoint(ck, path);
    Checkpoint re = load_checkpoint(path);
    fs::remove(path);
    CHECK(re.kind == "tdar");
    CHECK(re.seed == cfg.seed);
    CHECK(re.config_echo == "echo");

    DualDomainState warm;
    TdarOptimizer wopt;
    std::size_t done = 0;
    tdar_from_checkpoint(re, &warm, &wopt, &done);
    CHECK(done == 2);
    CHECK(bitwise_equal(warm.target.U, part.last.target.U));
    CHECK(bitwise_equal(warm.phi_user.W[1], part.last.phi_user.W[1]));
    CHECK(wopt.ut.t == part.last_opt.ut.t);
    CHECK(bitwise_equal(wopt.ut.m, part.last_opt.ut.m));

    TdarResult resumed =
        train_tdar(src, tgt, feat_s, feat_t, nullptr, cfg, {&warm, &wopt, done});
    CHECK(resumed.epochs_done == 3);
    CHECK(bitwise_equal(resumed.last.target.U, full.last.target.U));
    CHECK(bitwise_equal(resumed.last.target.V, full.last.target.V));
    CHECK(bitwise_equal(resumed.last.source.U, full.last.source.U));
    CHECK(bitwise_equal(resumed.last.phi_user.W[0], full.last.phi_user.W[0]));
    CHECK(bitwise_equal(resumed.last.phi_item.b[2], full.last.phi_item.b[2]));
    CHECK(bitwise_equal(resumed.last_opt.ut.m, full.last_opt.ut.m));
    CHECK(bitwise_equal(resumed.last_opt.vt.v, full.last_opt.vt.v));
    REQUIRE(resumed.target_val_f1_trace.size() == 1);
    CHECK(resumed.target_val_f1_trace[0] == full.target_val_f1_trace[2]);
  }

  SUBCASE("warm starts with doctored anchors are rejected") {
    TdarConfig half = cfg;
    half.max_iters = 2;
    TdarResult part = train_tdar(src, tgt, feat_s, feat_t, nullptr, half);
    DualDomainState warm = part.last;
    warm.target.text->user.at(0, 0) += 0.5;
    CHECK_THROWS_WITH_AS(
        train_tdar(src, tgt, feat_s, feat_t, nullptr, cfg,
                   {&warm, &part.last_opt, 2}),
        "train_tdar: warm-start state carries different frozen features",
        std::runtime_error);
  }

  SUBCASE("config validation") {
    TdarConfig bad = cfg;
    bad.rho = 0;
    CHECK_THROWS_AS(train_tdar(src, tgt, feat_s, feat_t, nullptr, bad),
                    std::invalid_argument);
    TextualFeatures wrong = feat_t;
    wrong.user = Matrix(tgt.iset.num_users + 2, 4);
    CHECK_THROWS_AS(train_tdar(src, tgt, feat_s, wrong, nullptr, cfg),
                    std::runtime_error);
  }
}
