#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "xdr/cli_support.hpp"
#include "xdr/eval.hpp"
#include "xdr/rng.hpp"

using namespace xdr;

namespace {

// Straight-line re-derivations used to cross-check the library versions.
double brute_precision(const std::vector<std::uint32_t>& ranked, std::size_t k,
                       const std::set<std::uint32_t>& rel) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(k, ranked.size()); ++j)
    if (rel.count(ranked[j])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double brute_recall(const std::vector<std::uint32_t>& ranked, std::size_t k,
                    const std::set<std::uint32_t>& rel) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(k, ranked.size()); ++j)
    if (rel.count(ranked[j])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double brute_f1(const std::vector<std::uint32_t>& ranked, std::size_t k,
                const std::set<std::uint32_t>& rel) {
  double p = brute_precision(ranked, k, rel);
  double r = brute_recall(ranked, k, rel);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double brute_ndcg(const std::vector<std::uint32_t>& ranked, std::size_t k,
                  const std::set<std::uint32_t>& rel) {
  double dcg = 0.0;
  for (std::size_t j = 0; j < std::min(k, ranked.size()); ++j)
    if (rel.count(ranked[j])) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  double idcg = 0.0;
  for (std::size_t j = 0; j < std::min(k, rel.size()); ++j)
    idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

}  // namespace

TEST_CASE("top_k_items ranks by score with index tie-breaks and exclusions") {
  std::vector<double> scores{0.1, 0.9, 0.9, 0.5, 0.2};
  std::vector<std::uint32_t> none;
  auto top = top_k_items(scores, 3, none);
  REQUIRE(top.size() == 3);
  CHECK(top[0] == 1);  // tie with item 2 broken by index
  CHECK(top[1] == 2);
  CHECK(top[2] == 3);

  std::vector<std::uint32_t> excl{1, 3};
  auto filtered = top_k_items(scores, 3, excl);
  REQUIRE(filtered.size() == 3);
  CHECK(filtered[0] == 2);
  CHECK(filtered[1] == 4);
  CHECK(filtered[2] == 0);

  // k larger than the candidate pool returns everything that remains.
  CHECK(top_k_items(scores, 10, excl).size() == 3);
}

TEST_CASE("ranking metrics match brute force on random instances") {
  SplitRng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = rng.fork("inst" + std::to_string(trial));
    std::uint32_t n_items = 2 + static_cast<std::uint32_t>(g.next_below(19));
    std::size_t k = 1 + g.next_below(10);

    std::vector<std::uint32_t> perm(n_items);
    for (std::uint32_t i = 0; i < n_items; ++i) perm[i] = i;
    g.shuffle(perm);

    std::size_t n_rel = 1 + g.next_below(n_items);
    std::vector<std::uint32_t> rel_ids(perm.begin(), perm.begin() + n_rel);
    std::sort(rel_ids.begin(), rel_ids.end());
    std::set<std::uint32_t> rel(rel_ids.begin(), rel_ids.end());
    g.shuffle(perm);  // ranked order independent of relevance

    CHECK(precision_at_k(perm, k, rel_ids) == brute_precision(perm, k, rel));
    CHECK(recall_at_k(perm, k, rel_ids) == brute_recall(perm, k, rel));
    CHECK(f1_at_k(perm, k, rel_ids) == brute_f1(perm, k, rel));
    CHECK(ndcg_at_k(perm, k, rel_ids) == brute_ndcg(perm, k, rel));
  }
}

TEST_CASE("metric oracles") {
  // Single relevant item found at rank 3 (position index 2).
  std::vector<std::uint32_t> ranked{7, 4, 9, 1};
  std::vector<std::uint32_t> rel{9};
  CHECK(ndcg_at_k(ranked, 5, rel) ==
        doctest::Approx(0.6309297535714574).epsilon(1e-15));
  CHECK(precision_at_k(ranked, 4, rel) == 0.25);
  CHECK(recall_at_k(ranked, 4, rel) == 1.0);

  // Two of four relevant in the top 5: p = 2/5, r = 1/2, f1 = 4/9.
  std::vector<std::uint32_t> ranked2{1, 2, 3, 4, 5, 6};
  std::vector<std::uint32_t> rel2{2, 5, 7, 8};
  CHECK(f1_at_k(ranked2, 5, rel2) == doctest::Approx(4.0 / 9.0).epsilon(1e-15));

  // A perfect prefix scores ndcg exactly 1.
  std::vector<std::uint32_t> perfect{3, 1, 4};
  std::vector<std::uint32_t> rel3{1, 3, 4};
  CHECK(ndcg_at_k(perfect, 3, rel3) == 1.0);
  // A gap before the last hit costs discounted gain.
  std::vector<std::uint32_t> gap{3, 4, 1};
  CHECK(ndcg_at_k(gap, 3, std::vector<std::uint32_t>{1, 3}) < 1.0);
  // Every relevant item in the prefix scores exactly 1 even when k is larger.
  std::vector<std::uint32_t> perfect2{1, 3, 4};
  CHECK(ndcg_at_k(perfect2, 2, std::vector<std::uint32_t>{1, 3}) == 1.0);

  // Nothing found.
  CHECK(f1_at_k(ranked2, 2, std::vector<std::uint32_t>{9}) == 0.0);
  CHECK(ndcg_at_k(ranked2, 2, std::vector<std::uint32_t>{9}) == 0.0);

  CHECK_THROWS_AS(precision_at_k(ranked, 0, rel), std::invalid_argument);
  CHECK_THROWS_AS(ndcg_at_k(ranked, 0, rel), std::invalid_argument);
  CHECK_THROWS_AS(
      recall_at_k(ranked, 2, std::vector<std::uint32_t>{}),
      std::invalid_argument);
}

TEST_CASE("evaluate_ranking averages over users with relevant items") {
  DatasetBundle b = make_toy_bundle(12, 10, 8, 4, 0.5, 31);
  const std::uint32_t n_items = b.iset.num_items;

  // Score = item index: the ranking is the same for every user, so the
  // report can be recomputed by hand from the split.
  ScoreFn score = [&](std::uint32_t, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<double>(i);
  };
  auto report = evaluate_ranking(b, SplitPart::validation, score, {2, 5},
                                 CandidatePolicy::all_items, "probe", 31);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.at_k(2).k == 2);
  CHECK(report.at_k(5).k == 5);
  CHECK(report.at_k(2).model == "probe");
  CHECK(report.at_k(2).split == "validation");

  auto rel_by_user = b.items_by_user(SplitPart::validation);
  double f1_sum = 0.0;
  std::size_t users = 0;
  for (std::uint32_t u = 0; u < b.iset.num_users; ++u) {
    if (rel_by_user[u].empty()) continue;
    ++users;
    std::vector<std::uint32_t> ranked;
    for (std::uint32_t i = n_items; i-- > 0;) ranked.push_back(i);
    std::set<std::uint32_t> rel(rel_by_user[u].begin(), rel_by_user[u].end());
    f1_sum += brute_f1(ranked, 5, rel);
  }
  REQUIRE(users > 0);
  CHECK(report.at_k(5).users == users);
  CHECK(report.at_k(5).f1 ==
        doctest::Approx(f1_sum / static_cast<double>(users)).epsilon(1e-12));

  SUBCASE("training positives are excluded under exclude_train") {
    // Give one user's training items the top scores; with exclusion they
    // cannot appear, so the metrics must differ whenever they would rank.
    auto rep_all = evaluate_ranking(b, SplitPart::validation, score, {5},
                                    CandidatePolicy::all_items, "probe", 31);
    auto rep_ex = evaluate_ranking(b, SplitPart::validation, score, {5},
                                   CandidatePolicy::exclude_train, "probe", 31);
    CHECK(rep_ex.at_k(5).f1 >= rep_all.at_k(5).f1);
    CHECK(std::string(candidate_policy_name(CandidatePolicy::exclude_train)) ==
          "exclude-train");
    CHECK(std::string(candidate_policy_name(CandidatePolicy::all_items)) ==
          "all-items");
  }

  SUBCASE("a split with no relevant users is an error") {
    DatasetBundle tiny = b;
    for (auto& a : tiny.split.assignment)
      a = static_cast<std::uint8_t>(SplitPart::train);
    CHECK_THROWS_WITH_AS(
        evaluate_ranking(tiny, SplitPart::test, score, {2},
                         CandidatePolicy::all_items, "probe", 31),
        "evaluate: no user has relevant items in split", std::runtime_error);
  }

  SUBCASE("empty k list is rejected") {
    CHECK_THROWS_AS(evaluate_ranking(b, SplitPart::validation, score, {},
                                     CandidatePolicy::all_items, "probe", 31),
                    std::invalid_argument);
  }

  SUBCASE("csv output carries one row per k") {
    std::string csv = report.to_csv();
    CHECK(csv.find("model,dataset,split,k,precision,recall,f1,ndcg,users,"
                   "seed,candidate_policy") == 0);
    CHECK(csv.find("probe") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
  }
}

TEST_CASE("mmd separates shifted distributions and vanishes on identity") {
  SplitRng rng(606);
  Matrix x(200, 4);
  for (auto& v : x.data) v = rng.next_gaussian(1.0);
  CHECK(std::abs(rbf_mmd2(x, x)) < 0.05);

  Matrix y(200, 4);
  for (auto& v : y.data) v = 5.0 + rng.next_gaussian(1.0);
  CHECK(rbf_mmd2(x, y) > 0.5);

  // Same distribution, fresh draw: small but nonzero.
  Matrix z(200, 4);
  for (auto& v : z.data) v = rng.next_gaussian(1.0);
  CHECK(std::abs(rbf_mmd2(x, z)) < 0.05);

  // Fixed bandwidth agrees in sign and scale.
  CHECK(rbf_mmd2(x, y, 2.0) > 0.5);

  Matrix w(5, 3);
  CHECK_THROWS_AS(rbf_mmd2(x, w), std::invalid_argument);
  Matrix one(1, 4);
  CHECK_THROWS_AS(rbf_mmd2(one, one), std::invalid_argument);
}
