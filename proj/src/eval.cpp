#include "xdr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "xdr/kernels.hpp"

namespace xdr {

std::vector<std::uint32_t> top_k_items(std::span<const double> scores,
                                       std::size_t k,
                                       std::span<const std::uint32_t> excluded) {
  std::vector<std::uint32_t> idx;
  idx.reserve(scores.size());
  std::size_t e = 0;
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    while (e < excluded.size() && excluded[e] < i) ++e;
    if (e < excluded.size() && excluded[e] == i) continue;
    idx.push_back(i);
  }
  k = std::min(k, idx.size());
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), better);
  idx.resize(k);
  return idx;
}

namespace {
std::size_t hits_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                      std::span<const std::uint32_t> relevant) {
  if (relevant.empty())
    throw std::invalid_argument("metrics need a non-empty relevant set");
  std::size_t h = 0;
  std::size_t top = std::min(k, ranked.size());
  for (std::size_t j = 0; j < top; ++j) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[j])) ++h;
  }
  return h;
}
}  // namespace

double precision_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                      std::span<const std::uint32_t> relevant) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  return static_cast<double>(hits_at_k(ranked, k, relevant)) /
         static_cast<double>(k);
}

double recall_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                   std::span<const std::uint32_t> relevant) {
  return static_cast<double>(hits_at_k(ranked, k, relevant)) /
         static_cast<double>(relevant.size());
}

double f1_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
               std::span<const std::uint32_t> relevant) {
  double p = precision_at_k(ranked, k, relevant);
  double r = recall_at_k(ranked, k, relevant);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double ndcg_at_k(std::span<const std::uint32_t> ranked, std::size_t k,
                 std::span<const std::uint32_t> relevant) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (relevant.empty())
    throw std::invalid_argument("metrics need a non-empty relevant set");
  double dcg = 0.0;
  std::size_t top = std::min(k, ranked.size());
  for (std::size_t j = 0; j < top; ++j) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[j]))
      dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  }
  double idcg = 0.0;
  std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t j = 0; j < ideal; ++j)
    idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

const char* candidate_policy_name(CandidatePolicy p) {
  return p == CandidatePolicy::exclude_train ? "exclude-train" : "all-items";
}

const MetricRow& MetricsReport::at_k(std::size_t k) const {
  for (const auto& r : rows)
    if (r.k == k) return r;
  throw std::out_of_range("no metrics row for k=" + std::to_string(k));
}

std::string MetricsReport::to_csv() const {
  std::string out =
      "model,dataset,split,k,precision,recall,f1,ndcg,users,seed,candidate_policy\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%zu,%.10g,%.10g,%.10g,%.10g,%zu,%llu,%s\n",
                  r.model.c_str(), r.dataset.c_str(), r.split.c_str(), r.k,
                  r.precision, r.recall, r.f1, r.ndcg, r.users,
                  static_cast<unsigned long long>(r.seed),
                  candidate_policy_name(r.policy));
    out += buf;
  }
  return out;
}

std::string MetricsReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"model", r.model},
                   {"dataset", r.dataset},
                   {"split", r.split},
                   {"k", r.k},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"ndcg", r.ndcg},
                   {"users", r.users},
                   {"seed", r.seed},
                   {"candidate_policy", candidate_policy_name(r.policy)}});
  }
  return arr.dump(2) + "\n";
}

MetricsReport evaluate_ranking(const DatasetBundle& data, SplitPart part,
                               const ScoreFn& score,
                               const std::vector<std::size_t>& ks,
                               CandidatePolicy policy,
                               const std::string& model_name,
                               std::uint64_t seed) {
  if (ks.empty()) throw std::invalid_argument("evaluate: empty k list");
  std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  auto train = data.items_by_user(SplitPart::train);
  auto rel = data.items_by_user(part);

  std::vector<double> scores(data.iset.num_items);
  std::vector<std::uint32_t> no_exclusions;
  std::vector<double> sum_p(ks.size(), 0.0), sum_r(ks.size(), 0.0),
      sum_f(ks.size(), 0.0), sum_n(ks.size(), 0.0);
  std::size_t users = 0;
  for (std::uint32_t u = 0; u < data.iset.num_users; ++u) {
    if (rel[u].empty()) continue;
    ++users;
    score(u, scores);
    std::span<const std::uint32_t> excluded =
        policy == CandidatePolicy::exclude_train
            ? std::span<const std::uint32_t>(train[u])
            : std::span<const std::uint32_t>(no_exclusions);
    auto ranked = top_k_items(scores, max_k, excluded);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      sum_p[j] += precision_at_k(ranked, ks[j], rel[u]);
      sum_r[j] += recall_at_k(ranked, ks[j], rel[u]);
      sum_f[j] += f1_at_k(ranked, ks[j], rel[u]);
      sum_n[j] += ndcg_at_k(ranked, ks[j], rel[u]);
    }
  }

  if (users == 0)
    throw std::runtime_error("evaluate: no user has relevant items in split");

  const char* split_name = part == SplitPart::train        ? "train"
                           : part == SplitPart::validation ? "validation"
                                                           : "test";
  MetricsReport rep;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    MetricRow row;
    row.model = model_name;
    row.dataset = data.name;
    row.split = split_name;
    row.k = ks[j];
    row.precision = sum_p[j] / static_cast<double>(users);
    row.recall = sum_r[j] / static_cast<double>(users);
    row.f1 = sum_f[j] / static_cast<double>(users);
    row.ndcg = sum_n[j] / static_cast<double>(users);
    row.users = users;
    row.seed = seed;
    row.policy = policy;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

double rbf_mmd2(const Matrix& x, const Matrix& y, double bandwidth) {
  if (x.cols != y.cols)
    throw std::invalid_argument("mmd: sample dimensions differ");
  if (x.rows < 2 || y.rows < 2)
    throw std::invalid_argument("mmd: need at least two rows per sample");
  std::size_t m = x.rows, n = y.rows, d = x.cols;

  auto row = [&](const Matrix& mat, std::size_t r) {
    return mat.data.data() + r * d;
  };

  double sigma = bandwidth;
  if (sigma <= 0.0) {
    // Median pairwise distance over the pooled sample sets the bandwidth.
    std::vector<double> dists;
    dists.reserve((m + n) * (m + n - 1) / 2);
    auto pooled_row = [&](std::size_t r) {
      return r < m ? row(x, r) : row(y, r - m);
    };
    for (std::size_t a = 0; a < m + n; ++a) {
      for (std::size_t b = a + 1; b < m + n; ++b) {
        dists.push_back(std::sqrt(
            kernels::squared_distance(pooled_row(a), pooled_row(b), d)));
      }
    }
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    sigma = *mid;
    if (sigma <= 0.0) sigma = 1.0;  // all points identical
  }
  double gamma = 1.0 / (2.0 * sigma * sigma);

  auto kern = [&](const double* a, const double* b) {
    return std::exp(-gamma * kernels::squared_distance(a, b, d));
  };

  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      if (a != b) kxx += kern(row(x, a), row(x, b));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (a != b) kyy += kern(row(y, a), row(y, b));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < n; ++b) kxy += kern(row(x, a), row(y, b));

  double md = static_cast<double>(m), nd = static_cast<double>(n);
  return kxx / (md * (md - 1.0)) + kyy / (nd * (nd - 1.0)) -
         2.0 * kxy / (md * nd);
}

}  // namespace xdr
