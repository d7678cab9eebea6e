#pragma once

#include <cstdint>
#include <string>

#include "xdr/corpus.hpp"

namespace xdr {

// Paired-domain generator with a planted two-level interest hierarchy:
// every user and item carries a topic and a subtopic within it, interaction
// propensity falls off from same-subtopic to same-topic to cross-topic, and
// same-subtopic interactions leave a review drawn from that subtopic's word
// pool over one shared word table (off-interest interactions go unreviewed).
// The two domains share nothing except that table, which is exactly the
// anchor the transfer models rely on. Review draws are sized so an entity's
// word support saturates its subtopic pool in both domains even at target
// sparsity, making the text anchors domain-invariant by construction;
// vector_scale keeps the anchor logits moderate so the text prior informs
// but does not decide the ranking.
struct SynthScenario {
  std::size_t topics = 4;
  std::size_t subtopics = 4;        // per topic
  std::size_t users_per_domain = 300;
  std::size_t items_per_domain = 200;
  std::size_t words_per_subtopic = 6;
  std::size_t common_words = 0;
  std::size_t k1 = 16;              // word-vector width
  double vector_scale = 0.3;        // centroid / word-noise magnitude
  double subtopic_scale = 0.1;      // subtopic offset relative to topic
  double density = 0.15;            // expected interaction density pre-keep
  double target_keep = 0.4;         // target-domain keep fraction
  double affinity_same = 0.9;       // relative propensity, same subtopic
  double affinity_sub = 0.25;       // same topic, different subtopic
  double affinity_cross = 0.05;     // relative propensity, cross topic
  std::size_t review_topic_words = 12;
  std::size_t review_common_words = 0;
  std::uint64_t seed = 1;
};

struct SynthOutput {
  DatasetBundle source;
  DatasetBundle target;
  WordSemanticTable table;  // full vocabulary before per-bundle intersection
};

SynthOutput generate_synthetic(const SynthScenario& scenario);

}  // namespace xdr
