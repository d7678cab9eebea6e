#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xdr/matrix.hpp"
#include "xdr/rng.hpp"

namespace xdr {

using IndexPair = std::pair<std::uint32_t, std::uint32_t>;

struct RawRecord {
  std::string user_key;
  std::string item_key;
  double rating = 0.0;
  std::vector<std::string> tokens;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t malformed = 0;
};

// Lowercases and splits on runs of non-alphanumeric characters.
std::vector<std::string> tokenize(std::string_view text);

// Line-delimited JSON records: reviewerID, asin, overall, reviewText.
// Malformed lines are skipped and counted; more than 1% malformed is a hard
// error.
std::vector<RawRecord> parse_reviews(std::istream& in,
                                     ParseStats* stats = nullptr);

// Unique positive pairs with merged review tokens, indexed against
// first-appearance entity tables.
struct PositiveSet {
  std::vector<std::string> user_keys;  // provisional index -> external id
  std::vector<std::string> item_keys;
  std::vector<IndexPair> pairs;  // unique, in first-appearance order
  std::vector<std::vector<std::string>> pair_tokens;  // aligned with pairs
};

PositiveSet binarize(std::vector<RawRecord> records);

// Iteratively peels users and items of degree < k until fixpoint. Keeps the
// surviving pairs in their input order.
std::vector<IndexPair> k_core_filter(const std::vector<IndexPair>& pairs,
                                     std::uint32_t k);
std::vector<std::size_t> k_core_filter_indices(
    const std::vector<IndexPair>& pairs, std::uint32_t k);

// Uniform subset of size round(keep_fraction * n), input order preserved.
std::vector<std::size_t> sparsify_indices(std::size_t n, double keep_fraction,
                                          SplitRng rng);
std::vector<IndexPair> sparsify(const std::vector<IndexPair>& pairs,
                                double keep_fraction, SplitRng rng);

enum class SplitPart : std::uint8_t { train = 0, validation = 1, test = 2 };

struct SplitSet {
  std::vector<std::uint8_t> assignment;  // aligned with the pair list
  std::uint64_t seed = 0;
  std::size_t count(SplitPart part) const;
};

// Disjoint 80/10/10 random partition (counts exact to rounding).
SplitSet split_pairs(std::size_t n, SplitRng rng, std::uint64_t seed);

struct WordSemanticTable {
  Matrix S;  // H x K1, frozen after load
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::uint32_t> index;

  std::size_t vocab_size() const { return tokens.size(); }
  std::size_t dim() const { return S.cols; }
};

enum class VectorFormat { text, binary, automatic };

WordSemanticTable load_word_vectors(const std::string& path,
                                    VectorFormat format = VectorFormat::automatic);
void write_word_vectors_text(const WordSemanticTable& table,
                             const std::string& path);
void write_word_vectors_binary(const WordSemanticTable& table,
                               const std::string& path);

// Word-id multiset per entity, stored as (word id, count) sorted by id.
using WordMultiset = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

struct InteractionSet {
  std::uint32_t num_users = 0;
  std::uint32_t num_items = 0;
  std::vector<IndexPair> positives;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;
  std::vector<std::string> words;  // word id -> token
  std::vector<WordMultiset> user_reviews;  // built from training pairs
  std::vector<WordMultiset> item_reviews;

  double sparsity() const;
};

struct DatasetStats {
  std::uint64_t interactions = 0;
  std::uint64_t users = 0;
  std::uint64_t items = 0;
  double sparsity = 0.0;             // fraction in [0,1]
  std::string sparsity_percent;      // "99.9726%" style, 4 decimals
};

DatasetStats dataset_stats(const InteractionSet& set);

struct DatasetBundle {
  std::string name;
  InteractionSet iset;
  SplitSet split;
  std::optional<WordSemanticTable> table;  // intersected vocabulary
  std::uint64_t seed = 0;
  std::uint32_t core_k = 1;
  double keep_fraction = 1.0;

  std::vector<std::vector<std::uint32_t>> items_by_user(SplitPart part) const;
  std::vector<std::vector<std::uint32_t>> users_by_item(SplitPart part) const;
};

// Full preparation pipeline: k-core -> sparsify -> split -> vocabulary
// intersection. Review word sets come from training pairs only, so held-out
// interactions never leak into the textual features. When `vectors` is null
// the vocabulary is kept as-is and the bundle carries no semantic table.
DatasetBundle prepare_dataset(PositiveSet positives, std::uint32_t core_k,
                              double keep_fraction, std::uint64_t seed,
                              const WordSemanticTable* vectors,
                              std::string name = "dataset");

void save_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

}  // namespace xdr
