#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xdr/cli_support.hpp"
#include "xdr/corpus.hpp"
#include "xdr/rng.hpp"
#include "xdr/synth.hpp"

using namespace xdr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("xdr_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
  auto t = tokenize("Hello, World!  It's 42x...");
  REQUIRE(t.size() == 5);
  CHECK(t[0] == "hello");
  CHECK(t[1] == "world");
  CHECK(t[2] == "it");
  CHECK(t[3] == "s");
  CHECK(t[4] == "42x");
  CHECK(tokenize("").empty());
  CHECK(tokenize("  --- !!! ").empty());
  CHECK(tokenize("one").size() == 1);
}

TEST_CASE("parse_reviews keeps good records and tolerates rare bad lines") {
  std::string good =
      R"({"reviewerID": "u1", "asin": "i1", "overall": 5.0, "reviewText": "Great Stuff!"})";
  std::string bare = R"({"reviewerID": "u2", "asin": "i2"})";

  SUBCASE("fields and optional members") {
    std::istringstream in(good + "\n\n  \t\n" + bare + "\n");
    ParseStats st;
    auto recs = parse_reviews(in, &st);
    REQUIRE(recs.size() == 2);
    CHECK(st.lines == 2);  // blank lines are not counted
    CHECK(st.malformed == 0);
    CHECK(recs[0].user_key == "u1");
    CHECK(recs[0].item_key == "i1");
    CHECK(recs[0].rating == 5.0);
    REQUIRE(recs[0].tokens.size() == 2);
    CHECK(recs[0].tokens[0] == "great");
    CHECK(recs[0].tokens[1] == "stuff");
    CHECK(recs[1].rating == 0.0);
    CHECK(recs[1].tokens.empty());
  }

  SUBCASE("malformed lines are skipped when rare") {
    std::ostringstream src;
    for (int i = 0; i < 100; ++i)
      src << R"({"reviewerID": "u", "asin": "i)" << i << "\"}\n";
    src << "this is not json\n";
    std::istringstream in(src.str());
    ParseStats st;
    auto recs = parse_reviews(in, &st);
    CHECK(recs.size() == 100);
    CHECK(st.lines == 101);
    CHECK(st.malformed == 1);
  }

  SUBCASE("over one percent malformed is a hard error") {
    std::istringstream in(good + "\nnot json\n" + good + "\n");
    CHECK_THROWS_WITH_AS(parse_reviews(in),
                         "parse_reviews: 1 of 3 lines malformed (over 1%)",
                         std::runtime_error);
  }

  SUBCASE("field validation") {
    auto count_malformed = [](const std::string& line) {
      std::ostringstream src;
      for (int i = 0; i < 200; ++i)
        src << R"({"reviewerID": "u", "asin": "i)" << i << "\"}\n";
      src << line << '\n';
      std::istringstream in(src.str());
      ParseStats st;
      parse_reviews(in, &st);
      return st.malformed;
    };
    CHECK(count_malformed(R"({"asin": "i"})") == 1);                  // no user
    CHECK(count_malformed(R"({"reviewerID": "u"})") == 1);            // no item
    CHECK(count_malformed(R"({"reviewerID": 3, "asin": "i"})") == 1);
    CHECK(count_malformed(R"({"reviewerID": "", "asin": "i"})") == 1);
    CHECK(count_malformed(R"({"reviewerID": "u", "asin": "i", "overall": "5"})") == 1);
    CHECK(count_malformed(R"({"reviewerID": "u", "asin": "i", "reviewText": 7})") == 1);
    CHECK(count_malformed(R"([1, 2, 3])") == 1);
    CHECK(count_malformed(R"({"reviewerID": "u", "asin": "i", "overall": 4})") == 0);
  }
}

TEST_CASE("binarize dedupes pairs and merges review tokens") {
  std::vector<RawRecord> recs;
  recs.push_back({"u1", "i1", 5.0, {"good", "fun"}});
  recs.push_back({"u2", "i1", 4.0, {"ok"}});
  recs.push_back({"u1", "i1", 1.0, {"fun", "again"}});
  recs.push_back({"u1", "i2", 3.0, {}});
  PositiveSet ps = binarize(std::move(recs));

  REQUIRE(ps.user_keys.size() == 2);
  REQUIRE(ps.item_keys.size() == 2);
  CHECK(ps.user_keys[0] == "u1");
  CHECK(ps.user_keys[1] == "u2");
  CHECK(ps.item_keys[0] == "i1");
  REQUIRE(ps.pairs.size() == 3);
  CHECK(ps.pairs[0] == IndexPair{0, 0});
  CHECK(ps.pairs[1] == IndexPair{1, 0});
  CHECK(ps.pairs[2] == IndexPair{0, 1});
  REQUIRE(ps.pair_tokens[0].size() == 4);  // merged duplicate keeps all words
  CHECK(ps.pair_tokens[0][2] == "fun");
  CHECK(ps.pair_tokens[0][3] == "again");
  CHECK(ps.pair_tokens[1].size() == 1);
  CHECK(ps.pair_tokens[2].empty());
}

TEST_CASE("k-core filtering reaches a fixpoint with minimum degree k") {
  SplitRng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = rng.fork("graph" + std::to_string(trial));
    std::uint32_t nu = 4 + static_cast<std::uint32_t>(g.next_below(20));
    std::uint32_t ni = 4 + static_cast<std::uint32_t>(g.next_below(20));
    std::size_t m = 10 + g.next_below(90);
    std::vector<IndexPair> pairs;
    for (std::size_t p = 0; p < m; ++p)
      pairs.emplace_back(static_cast<std::uint32_t>(g.next_below(nu)),
                         static_cast<std::uint32_t>(g.next_below(ni)));
    std::uint32_t k = 2 + static_cast<std::uint32_t>(g.next_below(2));

    auto idx = k_core_filter_indices(pairs, k);
    auto kept = k_core_filter(pairs, k);
    REQUIRE(idx.size() == kept.size());

    // Kept indices form an increasing subsequence of the input.
    for (std::size_t j = 0; j < idx.size(); ++j) {
      CHECK(idx[j] < pairs.size());
      if (j > 0) CHECK(idx[j] > idx[j - 1]);
      CHECK(kept[j] == pairs[idx[j]]);
    }

    // Every survivor has degree >= k inside the surviving subgraph.
    std::vector<std::uint32_t> udeg(nu, 0), ideg(ni, 0);
    for (auto [u, i] : kept) {
      ++udeg[u];
      ++ideg[i];
    }
    for (auto [u, i] : kept) {
      CHECK(udeg[u] >= k);
      CHECK(ideg[i] >= k);
    }

    // Fixpoint: filtering the result again removes nothing.
    CHECK(k_core_filter(kept, k) == kept);
    // k <= 1 keeps everything.
    CHECK(k_core_filter(pairs, 1).size() == pairs.size());
  }

  SUBCASE("a star collapses entirely under k=2") {
    std::vector<IndexPair> star;
    for (std::uint32_t i = 0; i < 5; ++i) star.emplace_back(0, i);
    CHECK(k_core_filter(star, 2).empty());
  }

  SUBCASE("a pendant edge is peeled off a 2-core") {
    std::vector<IndexPair> g{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}};
    auto kept = k_core_filter(g, 2);
    REQUIRE(kept.size() == 4);
    CHECK(kept == std::vector<IndexPair>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  }
}

TEST_CASE("sparsify keeps a sorted uniform subset of the requested size") {
  auto sel = sparsify_indices(100, 0.37, SplitRng(11));
  REQUIRE(sel.size() == 37);
  for (std::size_t j = 0; j < sel.size(); ++j) {
    CHECK(sel[j] < 100);
    if (j > 0) CHECK(sel[j] > sel[j - 1]);
  }
  CHECK(sparsify_indices(100, 1.0, SplitRng(11)).size() == 100);
  CHECK(sparsify_indices(100, 0.0, SplitRng(11)).empty());
  CHECK(sparsify_indices(7, 0.5, SplitRng(11)).size() == 4);  // round half up
  CHECK(sparsify_indices(50, 0.2, SplitRng(3)) ==
        sparsify_indices(50, 0.2, SplitRng(3)));
  CHECK_THROWS_AS(sparsify_indices(10, 1.5, SplitRng(1)), std::invalid_argument);
  CHECK_THROWS_AS(sparsify_indices(10, -0.1, SplitRng(1)), std::invalid_argument);
}

TEST_CASE("split assigns disjoint 80/10/10 parts") {
  SplitSet s = split_pairs(100, SplitRng(5), 5);
  REQUIRE(s.assignment.size() == 100);
  CHECK(s.count(SplitPart::train) == 80);
  CHECK(s.count(SplitPart::validation) == 10);
  CHECK(s.count(SplitPart::test) == 10);
  for (std::uint8_t a : s.assignment) CHECK(a <= 2);

  SplitSet odd = split_pairs(95, SplitRng(5), 5);
  CHECK(odd.count(SplitPart::validation) == 10);
  CHECK(odd.count(SplitPart::test) == 10);
  CHECK(odd.count(SplitPart::train) == 75);

  CHECK(split_pairs(40, SplitRng(9), 9).assignment ==
        split_pairs(40, SplitRng(9), 9).assignment);
  CHECK_THROWS_WITH_AS(split_pairs(9, SplitRng(1), 1),
                       "split needs at least 10 interactions, got 9",
                       std::runtime_error);
}

TEST_CASE("dataset stats pin the published corpus sparsities") {
  InteractionSet movies;
  movies.num_users = 123960;
  movies.num_items = 50052;
  movies.positives.resize(1697532);
  DatasetStats ms = dataset_stats(movies);
  CHECK(ms.interactions == 1697532);
  CHECK(ms.users == 123960);
  CHECK(ms.items == 50052);
  CHECK(ms.sparsity_percent == "99.9726%");

  InteractionSet videos;
  videos.num_users = 4555;
  videos.num_items = 1580;
  videos.positives.resize(11137);
  CHECK(dataset_stats(videos).sparsity_percent == "99.8453%");

  InteractionSet empty;
  CHECK(empty.sparsity() == 1.0);
}

TEST_CASE("word vector files roundtrip") {
  TempDir dir("vectors");
  WordSemanticTable t;
  t.S = Matrix(4, 3);
  SplitRng rng(21);
  for (auto& v : t.S.data) v = rng.next_gaussian(2.0);
  t.S.at(0, 0) = 1e-13;
  t.S.at(3, 2) = -123456.75;
  for (std::uint32_t w = 0; w < 4; ++w) {
    t.tokens.push_back("tok" + std::to_string(w));
    t.index.emplace(t.tokens.back(), w);
  }

  SUBCASE("text format preserves doubles exactly") {
    auto path = (dir.path / "vecs.txt").string();
    write_word_vectors_text(t, path);
    WordSemanticTable r = load_word_vectors(path);  // auto-detected
    CHECK(r.tokens == t.tokens);
    CHECK(bitwise_equal(r.S, t.S));
    CHECK(r.index.at("tok2") == 2);
  }

  SUBCASE("binary format quantizes to f32") {
    auto path = (dir.path / "vecs.bin").string();
    write_word_vectors_binary(t, path);
    WordSemanticTable r = load_word_vectors(path);
    CHECK(r.tokens == t.tokens);
    REQUIRE(r.S.size() == t.S.size());
    for (std::size_t j = 0; j < t.S.size(); ++j)
      CHECK(r.S.data[j] == static_cast<double>(static_cast<float>(t.S.data[j])));
  }

  SUBCASE("duplicate tokens keep the first occurrence") {
    auto path = (dir.path / "dup.txt").string();
    write_word_vectors_text(t, path);
    std::ofstream app(path, std::ios::app);
    app << "tok0 9 9 9\n";
    app.close();
    WordSemanticTable r = load_word_vectors(path, VectorFormat::text);
    CHECK(r.tokens.size() == 4);
    CHECK(r.S.at(0, 1) == t.S.at(0, 1));
  }

  SUBCASE("width mismatches and empty files are rejected") {
    auto path = (dir.path / "bad.txt").string();
    std::ofstream out(path);
    out << "a 1 2 3\nb 4 5\n";
    out.close();
    CHECK_THROWS_AS(load_word_vectors(path, VectorFormat::text),
                    std::runtime_error);
    std::ofstream(path) << "\n";
    CHECK_THROWS_AS(load_word_vectors(path, VectorFormat::text),
                    std::runtime_error);
  }
}

TEST_CASE("prepare_dataset builds reviews from training pairs only") {
  // One unique marker word per pair: the vocabulary must contain exactly the
  // markers of pairs that landed in the training split.
  std::vector<RawRecord> recs;
  for (int p = 0; p < 40; ++p) {
    RawRecord r;
    r.user_key = "u" + std::to_string(p % 8);
    r.item_key = "i" + std::to_string((p * 3) % 10);
    r.tokens = {"only" + std::to_string(p), "shared"};
    recs.push_back(std::move(r));
  }
  PositiveSet ps = binarize(std::move(recs));
  const std::size_t n = ps.pairs.size();
  DatasetBundle b = prepare_dataset(ps, 1, 1.0, 17, nullptr, "traincheck");
  REQUIRE(b.iset.positives.size() == n);

  std::set<std::string> vocab(b.iset.words.begin(), b.iset.words.end());
  for (std::size_t p = 0; p < n; ++p) {
    bool in_train = b.split.assignment[p] ==
                    static_cast<std::uint8_t>(SplitPart::train);
    CHECK(vocab.count("only" + std::to_string(p)) == (in_train ? 1u : 0u));
  }
  CHECK(vocab.count("shared") == 1);

  // Review multisets are (id,count) sorted by id and cover training words.
  for (const auto& ws : b.iset.user_reviews) {
    for (std::size_t j = 1; j < ws.size(); ++j)
      CHECK(ws[j].first > ws[j - 1].first);
    for (auto [w, c] : ws) {
      CHECK(w < b.iset.words.size());
      CHECK(c >= 1);
    }
  }

  // items_by_user respects the split and sorts item ids.
  auto train_items = b.items_by_user(SplitPart::train);
  std::size_t total = 0;
  for (const auto& v : train_items) {
    total += v.size();
    CHECK(std::is_sorted(v.begin(), v.end()));
  }
  CHECK(total == b.split.count(SplitPart::train));
}

TEST_CASE("vocabulary intersects with the provided vector table") {
  WordSemanticTable table;
  table.S = Matrix(2, 3, 0.5);
  table.tokens = {"known", "also"};
  table.index = {{"known", 0}, {"also", 1}};

  std::vector<RawRecord> recs;
  for (int p = 0; p < 20; ++p) {
    RawRecord r;
    r.user_key = "u" + std::to_string(p % 4);
    r.item_key = "i" + std::to_string(p % 5);
    r.tokens = {"known", "unknown"};
    recs.push_back(std::move(r));
  }
  DatasetBundle b = prepare_dataset(binarize(std::move(recs)), 1, 1.0, 3, &table);
  REQUIRE(b.table.has_value());
  std::set<std::string> vocab(b.iset.words.begin(), b.iset.words.end());
  CHECK(vocab.count("known") == 1);
  CHECK(vocab.count("unknown") == 0);
  CHECK(b.table->vocab_size() == b.iset.words.size());
  // The bundle's vectors are quantized to f32 at intersection time.
  for (double v : b.table->S.data)
    CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("bundles roundtrip through disk exactly") {
  TempDir dir("bundle");
  DatasetBundle b = make_toy_bundle(10, 8, 15, 4, 0.4, 99);
  save_bundle(b, dir.str());
  DatasetBundle r = load_bundle(dir.str());

  CHECK(r.name == b.name);
  CHECK(r.seed == b.seed);
  CHECK(r.core_k == b.core_k);
  CHECK(r.keep_fraction == b.keep_fraction);
  CHECK(r.iset.positives == b.iset.positives);
  CHECK(r.split.assignment == b.split.assignment);
  CHECK(r.iset.user_ids == b.iset.user_ids);
  CHECK(r.iset.item_ids == b.iset.item_ids);
  CHECK(r.iset.words == b.iset.words);
  CHECK(r.iset.user_reviews == b.iset.user_reviews);
  CHECK(r.iset.item_reviews == b.iset.item_reviews);
  REQUIRE(r.table.has_value());
  CHECK(bitwise_equal(r.table->S, b.table->S));

  SUBCASE("tampered split labels are rejected") {
    auto path = dir.path / "interactions.csv";
    std::ofstream out(path, std::ios::app);
    out << "0,0,holdout\n";
    out.close();
    CHECK_THROWS_AS(load_bundle(dir.str()), std::runtime_error);
  }
}

TEST_CASE("synthetic scenario generation is deterministic") {
  SynthScenario sc;
  sc.topics = 2;
  sc.subtopics = 2;
  sc.users_per_domain = 40;
  sc.items_per_domain = 30;
  sc.words_per_subtopic = 4;
  sc.k1 = 8;
  sc.density = 0.2;
  sc.target_keep = 0.5;
  sc.seed = 7;

  SynthOutput a = generate_synthetic(sc);
  SynthOutput g = generate_synthetic(sc);
  CHECK(bitwise_equal(a.table.S, g.table.S));
  CHECK(a.source.iset.positives == g.source.iset.positives);
  CHECK(a.target.iset.positives == g.target.iset.positives);
  CHECK(a.source.split.assignment == g.source.split.assignment);
  CHECK(a.target.split.assignment == g.target.split.assignment);

  // The target keeps a fraction of its interactions, so it ends up sparser.
  CHECK(a.target.iset.positives.size() < a.source.iset.positives.size());
  REQUIRE(a.source.table.has_value());
  REQUIRE(a.target.table.has_value());

  // Both domains draw words from the shared table.
  for (const auto& tok : a.source.iset.words)
    CHECK(a.table.index.count(tok) == 1);
  for (const auto& tok : a.target.iset.words)
    CHECK(a.table.index.count(tok) == 1);

  SynthScenario other = sc;
  other.seed = 8;
  SynthOutput c = generate_synthetic(other);
  CHECK_FALSE(bitwise_equal(a.table.S, c.table.S));
}
