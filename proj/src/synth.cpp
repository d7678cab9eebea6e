#include "xdr/synth.hpp"

#include <stdexcept>
#include <string>

namespace xdr {

namespace {

WordSemanticTable make_word_table(const SynthScenario& sc, SplitRng rng) {
  WordSemanticTable t;
  std::size_t micro = sc.topics * sc.subtopics;
  std::size_t vocab = micro * sc.words_per_subtopic + sc.common_words;
  t.S = Matrix(vocab, sc.k1);
  t.tokens.reserve(vocab);

  // Subtopic words cluster around topic centroid + subtopic offset; common
  // words are unanchored noise shared by every review.
  std::size_t row = 0;
  for (std::size_t k = 0; k < sc.topics; ++k) {
    auto c_rng = rng.fork("centroid").fork(k);
    std::vector<double> centroid(sc.k1);
    for (auto& v : centroid) v = c_rng.next_gaussian(sc.vector_scale);
    for (std::size_t s = 0; s < sc.subtopics; ++s) {
      auto o_rng = rng.fork("offset").fork(k * sc.subtopics + s);
      std::vector<double> center(sc.k1);
      for (std::size_t d = 0; d < sc.k1; ++d)
        center[d] = centroid[d] +
                    o_rng.next_gaussian(sc.vector_scale * sc.subtopic_scale);
      auto w_rng = rng.fork("words").fork(k * sc.subtopics + s);
      for (std::size_t j = 0; j < sc.words_per_subtopic; ++j, ++row) {
        t.tokens.push_back("t" + std::to_string(k) + "s" + std::to_string(s) +
                           "w" + std::to_string(j));
        for (std::size_t d = 0; d < sc.k1; ++d)
          t.S.at(row, d) =
              center[d] + w_rng.next_gaussian(0.3 * sc.vector_scale);
      }
    }
  }
  auto n_rng = rng.fork("common");
  for (std::size_t j = 0; j < sc.common_words; ++j, ++row) {
    t.tokens.push_back("c" + std::to_string(j));
    for (std::size_t d = 0; d < sc.k1; ++d)
      t.S.at(row, d) = n_rng.next_gaussian(sc.vector_scale);
  }
  for (std::uint32_t w = 0; w < t.tokens.size(); ++w)
    t.index.emplace(t.tokens[w], w);
  return t;
}

std::vector<RawRecord> make_domain_records(const SynthScenario& sc,
                                           const WordSemanticTable& table,
                                           const std::string& prefix,
                                           SplitRng rng) {
  std::size_t micro = sc.topics * sc.subtopics;
  // Propensities scaled so the expected density matches the scenario.
  double mean_affinity =
      (sc.affinity_same + sc.affinity_sub * double(sc.subtopics - 1) +
       sc.affinity_cross * double(micro - sc.subtopics)) /
      double(micro);
  double scale = sc.density / mean_affinity;
  double p_same = std::min(1.0, scale * sc.affinity_same);
  double p_sub = std::min(1.0, scale * sc.affinity_sub);
  double p_cross = std::min(1.0, scale * sc.affinity_cross);

  auto pair_rng = rng.fork("pairs");
  auto review_rng = rng.fork("reviews");
  std::vector<RawRecord> records;
  for (std::size_t u = 0; u < sc.users_per_domain; ++u) {
    std::size_t um = u % micro;
    for (std::size_t i = 0; i < sc.items_per_domain; ++i) {
      std::size_t im = i % micro;
      double p = um == im ? p_same
                 : um / sc.subtopics == im / sc.subtopics ? p_sub
                                                          : p_cross;
      if (pair_rng.next_double() >= p) continue;
      RawRecord rec;
      rec.user_key = prefix + "u" + std::to_string(u);
      rec.item_key = prefix + "i" + std::to_string(i);
      rec.rating = 5.0;
      // Only interactions inside the shared subtopic carry review text; a
      // purchase outside the user's niche says nothing about vocabulary.
      if (um == im) {
        for (std::size_t j = 0; j < sc.review_topic_words; ++j) {
          std::size_t w = review_rng.next_below(sc.words_per_subtopic);
          rec.tokens.push_back(table.tokens[um * sc.words_per_subtopic + w]);
        }
        for (std::size_t j = 0;
             sc.common_words > 0 && j < sc.review_common_words; ++j) {
          std::size_t w = review_rng.next_below(sc.common_words);
          rec.tokens.push_back(
              table.tokens[micro * sc.words_per_subtopic + w]);
        }
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace

SynthOutput generate_synthetic(const SynthScenario& sc) {
  if (sc.topics == 0)
    throw std::invalid_argument("synthetic scenario needs at least one topic");
  if (sc.subtopics == 0 || sc.users_per_domain == 0 ||
      sc.items_per_domain == 0 || sc.words_per_subtopic == 0)
    throw std::invalid_argument("degenerate synthetic scenario");
  if (!(sc.density > 0.0 && sc.density <= 1.0) ||
      !(sc.target_keep > 0.0 && sc.target_keep <= 1.0))
    throw std::invalid_argument("synthetic densities must be in (0,1]");

  SplitRng root(sc.seed);
  SynthOutput out;
  out.table = make_word_table(sc, root.fork("words"));

  auto src_records =
      make_domain_records(sc, out.table, "s", root.fork("source"));
  auto tgt_records =
      make_domain_records(sc, out.table, "t", root.fork("target"));

  out.source = prepare_dataset(binarize(std::move(src_records)), 1, 1.0,
                               root.fork("prep-source").next_u64(), &out.table,
                               "synth-source");
  out.target = prepare_dataset(binarize(std::move(tgt_records)), 1,
                               sc.target_keep,
                               root.fork("prep-target").next_u64(), &out.table,
                               "synth-target");
  return out;
}

}  // namespace xdr
