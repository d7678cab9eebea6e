#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xdr/adversary.hpp"
#include "xdr/cf_models.hpp"
#include "xdr/corpus.hpp"
#include "xdr/eval.hpp"
#include "xdr/serialize.hpp"
#include "xdr/tmn.hpp"

namespace xdr {

// Checkpoint block layouts per model kind:
//   itempop: scores (1 x N)
//   mf:      U, V
//   tcf/wtcf: U, V, E, F
//   tmn:     P, Q, T, E, F
//   tdar:    see adversary.hpp
Checkpoint bank_to_checkpoint(const RepresentationBank& bank,
                              const std::string& kind,
                              const std::string& config_echo,
                              std::uint64_t seed);
RepresentationBank bank_from_checkpoint(const Checkpoint& ckpt);

Checkpoint tmn_to_checkpoint(const MemoryKeys& keys,
                             const TextualFeatures& features,
                             const std::string& config_echo,
                             std::uint64_t seed);

Checkpoint itempop_checkpoint(const std::vector<double>& scores,
                              const std::string& config_echo,
                              std::uint64_t seed);

// Ranking scorer for any checkpoint kind. For tdar checkpoints,
// target_domain selects which bank is scored.
ScoreFn scorer_from_checkpoint(const Checkpoint& ckpt,
                               const DatasetBundle& data,
                               bool target_domain = true);

void write_text_file(const std::string& path, const std::string& content);

// Evaluation on validation and test with one CSV/JSON pair.
MetricsReport evaluate_checkpoint(const Checkpoint& ckpt,
                                  const DatasetBundle& data,
                                  const std::vector<std::size_t>& ks,
                                  CandidatePolicy policy, SplitPart part,
                                  const std::string& model_name,
                                  std::uint64_t seed, bool target_domain = true);

// Tiny planted dataset for gradient checks and unit tests: every entity gets
// a few review words, interactions are random.
DatasetBundle make_toy_bundle(std::size_t users, std::size_t items,
                              std::size_t vocab, std::size_t k1,
                              double density, std::uint64_t seed);

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Finite-difference suites over TMN, MF/TCF and the domain classifier
// (parameters and input rows). inject_bug scales one analytic gradient by
// 1.01 to prove the harness notices.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed,
                                                 bool inject_bug);

}  // namespace xdr
