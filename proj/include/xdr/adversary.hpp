#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xdr/batch.hpp"
#include "xdr/cf_models.hpp"
#include "xdr/corpus.hpp"
#include "xdr/matrix.hpp"
#include "xdr/ops.hpp"
#include "xdr/rng.hpp"
#include "xdr/serialize.hpp"
#include "xdr/tmn.hpp"

namespace xdr {

// Interaction function shared by both domains. Inner product carries no
// parameters; the object still exists so "shared by reference" is a checkable
// property rather than a convention.
struct InteractionFunction {
  std::string kind = "inner-product";
  Matrix theta;  // empty for inner-product

  double score(std::span<const double> a, std::span<const double> b) const;
};

// Fully-connected domain classifier: hidden ReLU layers, scalar sigmoid
// output. W[l] is (in_l x out_l), b[l] is (1 x out_l).
struct DomainClassifier {
  std::vector<Matrix> W;
  std::vector<Matrix> b;

  static DomainClassifier init(std::size_t input_width,
                               std::vector<std::size_t> hidden, SplitRng rng);
  std::size_t input_width() const { return W.front().rows; }
  std::size_t layers() const { return W.size(); }
};

struct ClassifierGradients {
  std::vector<Matrix> W, b;

  static ClassifierGradients like(const DomainClassifier& phi);
  void clear();
};

double classifier_forward(std::span<const double> x,
                          const DomainClassifier& phi);

// Cross-entropy at the sigmoid output against `label`; accumulates parameter
// gradients into *grads (when non-null) and returns the gradient with
// respect to the input row. Callers updating embeddings keep only the
// embedding block of dx — the feature block is discarded because features
// are frozen.
struct ClassifierBackward {
  double prob = 0.0;
  double loss = 0.0;
  std::vector<double> dx;
};
ClassifierBackward classifier_backward(std::span<const double> x,
                                       const DomainClassifier& phi,
                                       double label,
                                       ClassifierGradients* grads);

// Eq.-style domain loss: target rows labeled 1, source rows labeled 0.
double domain_loss(const Matrix& source_rows, const Matrix& target_rows,
                   const DomainClassifier& phi);

// Same loss with gradients for phi and for every input row.
double domain_loss_and_gradients(const Matrix& source_rows,
                                 const Matrix& target_rows,
                                 const DomainClassifier& phi,
                                 ClassifierGradients* grads,
                                 Matrix* d_source_rows, Matrix* d_target_rows);

struct DualDomainState {
  RepresentationBank source;  // text features mandatory and frozen
  RepresentationBank target;
  std::shared_ptr<InteractionFunction> theta;  // shared by both domains
  DomainClassifier phi_user;
  DomainClassifier phi_item;
};

double tdar_predict(const DualDomainState& state, bool target_domain,
                    std::uint32_t u, std::uint32_t i);

// [U,E] rows (user side) or [V,F] rows (item side) for the given entities.
Matrix representation_rows(const RepresentationBank& bank, Side side,
                           std::span<const std::uint32_t> entities);

// Source loss is full weighted cross-entropy + lambda_s reg; target loss is
// positive-only (-sum log prediction) + lambda_t reg. A negative label in the
// target batch is a protocol violation.
std::pair<double, double> prediction_losses(const Batch& source_batch,
                                            const Batch& target_batch,
                                            const DualDomainState& state,
                                            double lambda_s, double lambda_t);

struct TdarRates {
  double eta_s = 0.0;
  double eta_t = 0.0;
  double eta_plus = 0.0;
  double eta_minus = 0.0;
};

struct TdarBatches {
  Batch source;  // positives + sampled negatives
  Batch target;  // positives only
  std::vector<std::uint32_t> source_users, target_users;
  std::vector<std::uint32_t> source_items, target_items;
};

// Per-group optimizer state. With use_adam=false every group takes the plain
// combined-gradient step (the literal update equations), which is what the
// transcription oracle and the sign tests exercise.
struct TdarOptimizer {
  AdamState us, vs, ut, vt;
  std::vector<AdamState> phi_u_w, phi_u_b, phi_i_w, phi_i_b;
  bool use_adam = true;

  static TdarOptimizer like(const DualDomainState& state, bool use_adam);
};

struct TdarStepInfo {
  double loss_source = 0.0;
  double loss_target = 0.0;
  double loss_user_domain = 0.0;
  double loss_item_domain = 0.0;
};

// One simultaneous update: all gradients are evaluated at the pre-step
// parameters, then embeddings descend eta*prediction-loss while ascending
// eta_minus*domain-loss, and the classifiers descend with eta_plus.
TdarStepInfo tdar_update_step(DualDomainState& state, const TdarBatches& batches,
                              const TdarRates& rates, double lambda_s,
                              double lambda_t, TdarOptimizer& opt);

enum class TdarStage { classifier, align, full };
TdarStage tdar_stage_from_name(const std::string& name);
const char* tdar_stage_name(TdarStage s);

struct TdarConfig {
  std::size_t k3 = 16;
  double eta_s = 0.01;
  double eta_t = 0.005;
  double eta_plus = 0.001;
  double eta_minus = 0.001;
  double lambda_s = 0.01;
  double lambda_t = 0.2;
  std::size_t rho = 1;  // source negatives per positive; must be >= 1
  std::size_t batch_size = 256;
  std::size_t max_iters = 200;
  std::size_t adv_rows = 64;  // domain rows per side per step
  std::uint64_t seed = 1;
  TdarStage stage = TdarStage::full;
  bool use_adam = true;
};

struct TdarResult {
  DualDomainState best;
  DualDomainState last;
  TdarOptimizer last_opt;
  std::vector<double> target_val_f1_trace;
  std::vector<double> user_acc_trace;  // held-out classifier accuracy
  std::vector<double> item_acc_trace;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::size_t epochs_done = 0;
  std::vector<std::uint32_t> heldout_source_users, heldout_target_users;
  std::vector<std::uint32_t> heldout_source_items, heldout_target_items;
};

// Warm start (stage hand-off or checkpoint resume). The state's feature
// blocks must equal the passed anchors bitwise.
struct TdarInit {
  const DualDomainState* state = nullptr;
  const TdarOptimizer* opt = nullptr;
  std::size_t epochs_done = 0;
};

// Both feature sets are frozen anchors; the source bank comes from a
// pretrained checkpoint. Target embeddings start at normal(0, 0.01).
// max_iters counts absolute epochs, so a resumed run continues from
// init.epochs_done up to the same total.
TdarResult train_tdar(const DatasetBundle& source, const DatasetBundle& target,
                      const TextualFeatures& source_features,
                      const TextualFeatures& target_features,
                      const RepresentationBank* pretrained_source,
                      const TdarConfig& config, const TdarInit& init = {});

// Fraction of held-out rows classified into the right domain (round(prob)).
double classifier_accuracy(const DomainClassifier& phi,
                           const Matrix& source_rows, const Matrix& target_rows);

// Checkpoint plumbing (both banks, both classifiers, optimizer moments and
// the completed-epoch counter, so training can resume bitwise).
Checkpoint tdar_to_checkpoint(const DualDomainState& state,
                              const TdarOptimizer& opt,
                              std::size_t epochs_done,
                              const std::string& config_echo,
                              std::uint64_t seed);
void tdar_from_checkpoint(const Checkpoint& ckpt, DualDomainState* state,
                          TdarOptimizer* opt, std::size_t* epochs_done);

}  // namespace xdr
