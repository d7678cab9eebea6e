#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xdr/corpus.hpp"
#include "xdr/matrix.hpp"

namespace xdr {

inline const std::vector<std::size_t> kDefaultKs{2, 5, 10, 20, 50, 100};

// Top-k item indices by descending score; ties broken by ascending index.
// Items in `excluded` (sorted) never appear.
std::vector<std::uint32_t> top_k_items(std::span<const double> scores,
                                       std::size_t k,
                                       std::span<const std::uint32_t> excluded);

// Per-list metrics over binary relevance. `relevant` must be sorted and
// non-empty; users without relevant items are skipped upstream.
double precision_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                      std::span<const std::uint32_t> relevant);
double recall_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                   std::span<const std::uint32_t> relevant);
double f1_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
               std::span<const std::uint32_t> relevant);
double ndcg_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                 std::span<const std::uint32_t> relevant);

enum class CandidatePolicy { exclude_train, all_items };

const char* candidate_policy_name(CandidatePolicy p);

struct MetricRow {
  std::string model;
  std::string dataset;
  std::string split;
  std::size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;  // users with at least one relevant item
  std::uint64_t seed = 0;
  CandidatePolicy policy = CandidatePolicy::exclude_train;
};

struct MetricsReport {
  std::vector<MetricRow> rows;

  std::string to_csv() const;
  std::string to_json() const;
  const MetricRow& at_k(std::size_t k) const;
};

// Scores every item for one user into `out` (size = number of items).
using ScoreFn =
    std::function<void(std::uint32_t user, std::span<double> out)>;

// Ranks the full item set per user (minus that user's training positives
// under exclude_train), averages the per-user metrics over users that have
// at least one relevant item in `part`.
MetricsReport evaluate_ranking(const DatasetBundle& data, SplitPart part,
                               const ScoreFn& score,
                               const std::vector<std::size_t>& ks,
                               CandidatePolicy policy,
                               const std::string& model_name,
                               std::uint64_t seed);

// Unbiased squared maximum mean discrepancy between the row samples of X and
// Y, RBF kernel. Bandwidth <= 0 selects the median pairwise distance over the
// pooled sample (the default policy). Needs at least two rows on each side.
double rbf_mmd2(const Matrix& x, const Matrix& y, double bandwidth = 0.0);

}  // namespace xdr
