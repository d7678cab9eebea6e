#include "xdr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "xdr/io.hpp"

namespace xdr {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<RawRecord> parse_reviews(std::istream& in, ParseStats* stats_out) {
  std::vector<RawRecord> out;
  ParseStats st;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++st.lines;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    bool ok = j.is_object() && j.contains("reviewerID") &&
              j["reviewerID"].is_string() && j.contains("asin") &&
              j["asin"].is_string();
    if (ok && j.contains("overall") && !j["overall"].is_number()) ok = false;
    if (ok && j.contains("reviewText") && !j["reviewText"].is_string())
      ok = false;
    RawRecord rec;
    if (ok) {
      rec.user_key = j["reviewerID"].get<std::string>();
      rec.item_key = j["asin"].get<std::string>();
      if (rec.user_key.empty() || rec.item_key.empty()) ok = false;
    }
    if (!ok) {
      ++st.malformed;
      continue;
    }
    if (j.contains("overall")) rec.rating = j["overall"].get<double>();
    if (j.contains("reviewText"))
      rec.tokens = tokenize(j["reviewText"].get<std::string>());
    out.push_back(std::move(rec));
  }
  if (stats_out) *stats_out = st;
  // Occasional bad lines are tolerated, a high rate means the wrong file.
  if (st.malformed * 100 > st.lines) {
    throw std::runtime_error("parse_reviews: " + std::to_string(st.malformed) +
                             " of " + std::to_string(st.lines) +
                             " lines malformed (over 1%)");
  }
  return out;
}

PositiveSet binarize(std::vector<RawRecord> records) {
  PositiveSet ps;
  std::unordered_map<std::string, std::uint32_t> umap, imap;
  std::unordered_map<std::uint64_t, std::size_t> pair_slot;
  for (auto& rec : records) {
    auto [uit, unew] = umap.try_emplace(
        rec.user_key, static_cast<std::uint32_t>(ps.user_keys.size()));
    if (unew) ps.user_keys.push_back(rec.user_key);
    auto [iit, inew] = imap.try_emplace(
        rec.item_key, static_cast<std::uint32_t>(ps.item_keys.size()));
    if (inew) ps.item_keys.push_back(rec.item_key);
    std::uint32_t u = uit->second, i = iit->second;
    std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | i;
    auto [pit, pnew] = pair_slot.try_emplace(key, ps.pairs.size());
    if (pnew) {
      ps.pairs.emplace_back(u, i);
      ps.pair_tokens.push_back(std::move(rec.tokens));
    } else {
      auto& dst = ps.pair_tokens[pit->second];
      dst.insert(dst.end(), std::make_move_iterator(rec.tokens.begin()),
                 std::make_move_iterator(rec.tokens.end()));
    }
  }
  return ps;
}

std::vector<std::size_t> k_core_filter_indices(
    const std::vector<IndexPair>& pairs, std::uint32_t k) {
  std::vector<std::size_t> kept(pairs.size());
  std::iota(kept.begin(), kept.end(), std::size_t{0});
  if (k <= 1 || pairs.empty()) return kept;

  std::uint32_t max_u = 0, max_i = 0;
  for (auto [u, i] : pairs) {
    max_u = std::max(max_u, u);
    max_i = std::max(max_i, i);
  }
  std::vector<std::uint32_t> udeg(max_u + 1), ideg(max_i + 1);
  for (;;) {
    std::fill(udeg.begin(), udeg.end(), 0u);
    std::fill(ideg.begin(), ideg.end(), 0u);
    for (std::size_t p : kept) {
      ++udeg[pairs[p].first];
      ++ideg[pairs[p].second];
    }
    std::vector<std::size_t> next;
    next.reserve(kept.size());
    for (std::size_t p : kept) {
      if (udeg[pairs[p].first] >= k && ideg[pairs[p].second] >= k)
        next.push_back(p);
    }
    if (next.size() == kept.size()) break;
    kept = std::move(next);
  }
  return kept;
}

std::vector<IndexPair> k_core_filter(const std::vector<IndexPair>& pairs,
                                     std::uint32_t k) {
  std::vector<IndexPair> out;
  for (std::size_t p : k_core_filter_indices(pairs, k)) out.push_back(pairs[p]);
  return out;
}

std::vector<std::size_t> sparsify_indices(std::size_t n, double keep_fraction,
                                          SplitRng rng) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("sparsify: keep fraction must be in [0,1]");
  auto keep = static_cast<std::size_t>(
      std::llround(keep_fraction * static_cast<double>(n)));
  keep = std::min(keep, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<IndexPair> sparsify(const std::vector<IndexPair>& pairs,
                                double keep_fraction, SplitRng rng) {
  std::vector<IndexPair> out;
  for (std::size_t p :
       sparsify_indices(pairs.size(), keep_fraction, std::move(rng)))
    out.push_back(pairs[p]);
  return out;
}

std::size_t SplitSet::count(SplitPart part) const {
  return static_cast<std::size_t>(
      std::count(assignment.begin(), assignment.end(),
                 static_cast<std::uint8_t>(part)));
}

SplitSet split_pairs(std::size_t n, SplitRng rng, std::uint64_t seed) {
  if (n < 10)
    throw std::runtime_error("split needs at least 10 interactions, got " +
                             std::to_string(n));
  auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  auto n_test = n_val;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  SplitSet out;
  out.seed = seed;
  out.assignment.assign(n, static_cast<std::uint8_t>(SplitPart::train));
  for (std::size_t j = 0; j < n_val; ++j)
    out.assignment[order[j]] = static_cast<std::uint8_t>(SplitPart::validation);
  for (std::size_t j = n_val; j < n_val + n_test; ++j)
    out.assignment[order[j]] = static_cast<std::uint8_t>(SplitPart::test);
  return out;
}

// ---------------------------------------------------------------------------
// Word vectors

namespace {

bool looks_like_binary_header(const std::string& first_line) {
  std::istringstream ss(first_line);
  long long a = 0, b = 0;
  std::string rest;
  if (!(ss >> a >> b)) return false;
  if (ss >> rest) return false;
  return a > 0 && b > 0;
}

WordSemanticTable load_vectors_text(std::istream& in, const std::string& path) {
  WordSemanticTable t;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (row.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": word vector line has no values");
    if (dim == 0) dim = row.size();
    if (row.size() != dim)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": inconsistent vector width");
    if (t.index.count(token)) continue;  // keep the first occurrence
    t.index.emplace(token, static_cast<std::uint32_t>(t.tokens.size()));
    t.tokens.push_back(token);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (t.tokens.empty())
    throw std::runtime_error(path + ": no word vectors found");
  t.S = Matrix(t.tokens.size(), dim);
  t.S.data = std::move(values);
  return t;
}

WordSemanticTable load_vectors_binary(std::istream& in,
                                      const std::string& path) {
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error(path + ": missing binary vector header");
  std::istringstream hs(header);
  std::size_t vocab = 0, dim = 0;
  if (!(hs >> vocab >> dim) || vocab == 0 || dim == 0)
    throw std::runtime_error(path + ": bad binary vector header");
  WordSemanticTable t;
  t.S = Matrix(vocab, dim);
  t.tokens.reserve(vocab);
  std::size_t row = 0;
  for (std::size_t w = 0; w < vocab; ++w) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF && (c == '\n' || c == '\r')) {
    }
    while (c != EOF && c != ' ') {
      token.push_back(static_cast<char>(c));
      c = in.get();
    }
    if (token.empty())
      throw std::runtime_error(path + ": truncated binary vector file");
    std::vector<float> buf(dim);
    io::read_bytes(in, buf.data(), dim * sizeof(float), "word vector row");
    if (t.index.count(token)) continue;
    t.index.emplace(token, static_cast<std::uint32_t>(row));
    t.tokens.push_back(token);
    for (std::size_t d = 0; d < dim; ++d)
      t.S.data[row * dim + d] = static_cast<double>(buf[d]);
    ++row;
  }
  t.S.rows = row;
  t.S.data.resize(row * dim);
  return t;
}

}  // namespace

WordSemanticTable load_word_vectors(const std::string& path,
                                    VectorFormat format) {
  if (format == VectorFormat::automatic) {
    auto probe = io::open_in(path, /*binary=*/true);
    std::string first;
    std::getline(probe, first);
    format = looks_like_binary_header(first) ? VectorFormat::binary
                                             : VectorFormat::text;
  }
  auto in = io::open_in(path, format == VectorFormat::binary);
  WordSemanticTable t = format == VectorFormat::binary
                            ? load_vectors_binary(in, path)
                            : load_vectors_text(in, path);
  if (!t.S.all_finite())
    throw std::runtime_error(path + ": word vectors contain non-finite values");
  return t;
}

void write_word_vectors_text(const WordSemanticTable& table,
                             const std::string& path) {
  auto out = io::open_out(path, /*binary=*/false);
  char buf[64];
  for (std::size_t w = 0; w < table.vocab_size(); ++w) {
    out << table.tokens[w];
    for (std::size_t d = 0; d < table.dim(); ++d) {
      std::snprintf(buf, sizeof buf, " %.17g", table.S.at(w, d));
      out << buf;
    }
    out << '\n';
  }
}

void write_word_vectors_binary(const WordSemanticTable& table,
                               const std::string& path) {
  auto out = io::open_out(path, /*binary=*/true);
  out << table.vocab_size() << ' ' << table.dim() << '\n';
  for (std::size_t w = 0; w < table.vocab_size(); ++w) {
    out << table.tokens[w] << ' ';
    for (std::size_t d = 0; d < table.dim(); ++d)
      io::write_f32(out, static_cast<float>(table.S.at(w, d)));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Pipeline

double InteractionSet::sparsity() const {
  double cells = static_cast<double>(num_users) * static_cast<double>(num_items);
  if (cells == 0.0) return 1.0;
  return 1.0 - static_cast<double>(positives.size()) / cells;
}

DatasetStats dataset_stats(const InteractionSet& set) {
  DatasetStats st;
  st.interactions = set.positives.size();
  st.users = set.num_users;
  st.items = set.num_items;
  st.sparsity = set.sparsity();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f%%", st.sparsity * 100.0);
  st.sparsity_percent = buf;
  return st;
}

DatasetBundle prepare_dataset(PositiveSet ps, std::uint32_t core_k,
                              double keep_fraction, std::uint64_t seed,
                              const WordSemanticTable* vectors,
                              std::string name) {
  SplitRng root(seed);
  DatasetBundle b;
  b.name = std::move(name);
  b.seed = seed;
  b.core_k = core_k;
  b.keep_fraction = keep_fraction;

  auto after_core = k_core_filter_indices(ps.pairs, core_k);

  // Entity tables are fixed after the core filter; an entity that later loses
  // every interaction to sparsification keeps its row (with an empty review
  // set) so bundles stay index-stable under density sweeps.
  InteractionSet& is = b.iset;
  std::vector<std::uint32_t> umap(ps.user_keys.size(), UINT32_MAX);
  std::vector<std::uint32_t> imap(ps.item_keys.size(), UINT32_MAX);
  for (std::size_t p : after_core) {
    auto [u, i] = ps.pairs[p];
    if (umap[u] == UINT32_MAX) {
      umap[u] = is.num_users++;
      is.user_ids.push_back(ps.user_keys[u]);
    }
    if (imap[i] == UINT32_MAX) {
      imap[i] = is.num_items++;
      is.item_ids.push_back(ps.item_keys[i]);
    }
  }
  for (std::uint32_t u = 0; u < is.num_users; ++u)
    is.user_index.emplace(is.user_ids[u], u);
  for (std::uint32_t i = 0; i < is.num_items; ++i)
    is.item_index.emplace(is.item_ids[i], i);

  auto sparse_sel =
      sparsify_indices(after_core.size(), keep_fraction, root.fork("sparsify"));
  std::vector<std::size_t> kept;
  kept.reserve(sparse_sel.size());
  for (std::size_t s : sparse_sel) kept.push_back(after_core[s]);

  is.positives.reserve(kept.size());
  for (std::size_t p : kept) {
    auto [u, i] = ps.pairs[p];
    is.positives.emplace_back(umap[u], imap[i]);
  }

  b.split = split_pairs(is.positives.size(), root.fork("split"), seed);

  // Vocabulary and review word sets come from training pairs only.
  std::unordered_map<std::string, std::uint32_t> word_id;
  std::vector<std::unordered_map<std::uint32_t, std::uint32_t>> ucnt(
      is.num_users),
      icnt(is.num_items);
  for (std::size_t row = 0; row < kept.size(); ++row) {
    if (b.split.assignment[row] != static_cast<std::uint8_t>(SplitPart::train))
      continue;
    auto [u, i] = is.positives[row];
    for (const auto& tok : ps.pair_tokens[kept[row]]) {
      if (vectors && !vectors->index.count(tok)) continue;
      auto [it, fresh] = word_id.try_emplace(
          tok, static_cast<std::uint32_t>(is.words.size()));
      if (fresh) is.words.push_back(tok);
      ++ucnt[u][it->second];
      ++icnt[i][it->second];
    }
  }
  auto flatten = [](std::unordered_map<std::uint32_t, std::uint32_t>& m) {
    WordMultiset ws(m.begin(), m.end());
    std::sort(ws.begin(), ws.end());
    return ws;
  };
  is.user_reviews.resize(is.num_users);
  is.item_reviews.resize(is.num_items);
  for (std::uint32_t u = 0; u < is.num_users; ++u)
    is.user_reviews[u] = flatten(ucnt[u]);
  for (std::uint32_t i = 0; i < is.num_items; ++i)
    is.item_reviews[i] = flatten(icnt[i]);

  if (vectors) {
    WordSemanticTable t;
    t.tokens = is.words;
    t.S = Matrix(is.words.size(), vectors->dim());
    for (std::size_t w = 0; w < is.words.size(); ++w) {
      t.index.emplace(is.words[w], static_cast<std::uint32_t>(w));
      std::uint32_t src = vectors->index.at(is.words[w]);
      for (std::size_t d = 0; d < vectors->dim(); ++d) {
        // Quantized to f32 up front so in-memory use matches a saved bundle.
        t.S.at(w, d) = static_cast<double>(
            static_cast<float>(vectors->S.at(src, d)));
      }
    }
    b.table = std::move(t);
  }
  return b;
}

std::vector<std::vector<std::uint32_t>> DatasetBundle::items_by_user(
    SplitPart part) const {
  std::vector<std::vector<std::uint32_t>> out(iset.num_users);
  for (std::size_t p = 0; p < iset.positives.size(); ++p) {
    if (split.assignment[p] != static_cast<std::uint8_t>(part)) continue;
    out[iset.positives[p].first].push_back(iset.positives[p].second);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

std::vector<std::vector<std::uint32_t>> DatasetBundle::users_by_item(
    SplitPart part) const {
  std::vector<std::vector<std::uint32_t>> out(iset.num_items);
  for (std::size_t p = 0; p < iset.positives.size(); ++p) {
    if (split.assignment[p] != static_cast<std::uint8_t>(part)) continue;
    out[iset.positives[p].second].push_back(iset.positives[p].first);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

// ---------------------------------------------------------------------------
// Bundle on disk

namespace {

constexpr char kReviewMagic[] = "XDRRVW1\n";
constexpr char kVectorMagic[] = "XDRVEC1\n";

const char* part_name(std::uint8_t a) {
  switch (a) {
    case 0: return "train";
    case 1: return "validation";
    case 2: return "test";
  }
  throw std::logic_error("bad split code");
}

std::uint8_t part_code(const std::string& s) {
  if (s == "train") return 0;
  if (s == "validation") return 1;
  if (s == "test") return 2;
  throw std::runtime_error("interactions.csv: unknown split label '" + s + "'");
}

void check_id(const std::string& id) {
  if (id.find_first_of(",\r\n") != std::string::npos)
    throw std::invalid_argument("entity id not representable in csv: " + id);
}

void write_id_csv(const std::string& path,
                  const std::vector<std::string>& ids) {
  auto out = io::open_out(path, /*binary=*/true);
  out << "index,id\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check_id(ids[i]);
    out << i << ',' << ids[i] << '\n';
  }
}

std::vector<std::string> read_id_csv(const std::string& path) {
  auto in = io::open_in(path, /*binary=*/false);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    ids.push_back(line.substr(comma + 1));
  }
  return ids;
}

void write_reviews(const std::string& path,
                   const std::vector<WordMultiset>& reviews) {
  auto out = io::open_out(path, /*binary=*/true);
  io::write_magic(out, kReviewMagic);
  io::write_u64(out, reviews.size());
  for (const auto& ws : reviews) {
    io::write_u32(out, static_cast<std::uint32_t>(ws.size()));
    for (auto [w, c] : ws) {
      io::write_u32(out, w);
      io::write_u32(out, c);
    }
  }
}

std::vector<WordMultiset> read_reviews(const std::string& path) {
  auto in = io::open_in(path, /*binary=*/true);
  io::expect_magic(in, kReviewMagic, "review file");
  std::vector<WordMultiset> reviews(io::read_u64(in, "review count"));
  for (auto& ws : reviews) {
    ws.resize(io::read_u32(in, "review entry count"));
    for (auto& [w, c] : ws) {
      w = io::read_u32(in, "review word");
      c = io::read_u32(in, "review word count");
    }
  }
  return reviews;
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  const InteractionSet& is = bundle.iset;
  if (bundle.split.assignment.size() != is.positives.size())
    throw std::invalid_argument("bundle split not aligned with interactions");

  json manifest{
      {"format", "xdr-bundle"},
      {"version", 1},
      {"name", bundle.name},
      {"seed", bundle.seed},
      {"core_k", bundle.core_k},
      {"keep_fraction", bundle.keep_fraction},
      {"pipeline", {"binarize", "core-filter", "sparsify", "split"}},
      {"review_source", "train"},
      {"users", is.num_users},
      {"items", is.num_items},
      {"interactions", is.positives.size()},
      {"words", is.words.size()},
      {"has_vectors", bundle.table.has_value()},
      {"vector_dim", bundle.table ? bundle.table->dim() : std::size_t{0}},
  };
  {
    auto out = io::open_out(dir + "/manifest.json", /*binary=*/true);
    out << manifest.dump(2) << '\n';
  }

  write_id_csv(dir + "/users.csv", is.user_ids);
  write_id_csv(dir + "/items.csv", is.item_ids);
  write_id_csv(dir + "/words.csv", is.words);

  {
    auto out = io::open_out(dir + "/interactions.csv", /*binary=*/true);
    out << "user,item,split\n";
    for (std::size_t p = 0; p < is.positives.size(); ++p) {
      out << is.positives[p].first << ',' << is.positives[p].second << ','
          << part_name(bundle.split.assignment[p]) << '\n';
    }
  }

  write_reviews(dir + "/user_reviews.bin", is.user_reviews);
  write_reviews(dir + "/item_reviews.bin", is.item_reviews);

  if (bundle.table) {
    auto out = io::open_out(dir + "/word_vectors.bin", /*binary=*/true);
    io::write_magic(out, kVectorMagic);
    io::write_u32(out, static_cast<std::uint32_t>(bundle.table->vocab_size()));
    io::write_u32(out, static_cast<std::uint32_t>(bundle.table->dim()));
    for (double v : bundle.table->S.data)
      io::write_f32(out, static_cast<float>(v));
  }

  DatasetStats st = dataset_stats(is);
  {
    auto out = io::open_out(dir + "/stats.csv", /*binary=*/true);
    out << "interactions,users,items,sparsity\n";
    out << st.interactions << ',' << st.users << ',' << st.items << ','
        << st.sparsity_percent << '\n';
  }
}

DatasetBundle load_bundle(const std::string& dir) {
  DatasetBundle b;
  json manifest;
  {
    auto in = io::open_in(dir + "/manifest.json", /*binary=*/false);
    in >> manifest;
  }
  if (manifest.value("format", "") != "xdr-bundle")
    throw std::runtime_error(dir + ": not a dataset bundle");
  b.name = manifest.value("name", "dataset");
  b.seed = manifest.value("seed", std::uint64_t{0});
  b.core_k = manifest.value("core_k", std::uint32_t{1});
  b.keep_fraction = manifest.value("keep_fraction", 1.0);

  InteractionSet& is = b.iset;
  is.user_ids = read_id_csv(dir + "/users.csv");
  is.item_ids = read_id_csv(dir + "/items.csv");
  is.words = read_id_csv(dir + "/words.csv");
  is.num_users = static_cast<std::uint32_t>(is.user_ids.size());
  is.num_items = static_cast<std::uint32_t>(is.item_ids.size());
  for (std::uint32_t u = 0; u < is.num_users; ++u)
    is.user_index.emplace(is.user_ids[u], u);
  for (std::uint32_t i = 0; i < is.num_items; ++i)
    is.item_index.emplace(is.item_ids[i], i);

  {
    auto in = io::open_in(dir + "/interactions.csv", /*binary=*/false);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto c1 = line.find(',');
      auto c2 = line.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos)
        throw std::runtime_error("interactions.csv: malformed row '" + line +
                                 "'");
      std::uint32_t u = static_cast<std::uint32_t>(
          std::stoul(line.substr(0, c1)));
      std::uint32_t i = static_cast<std::uint32_t>(
          std::stoul(line.substr(c1 + 1, c2 - c1 - 1)));
      if (u >= is.num_users || i >= is.num_items)
        throw std::runtime_error("interactions.csv: index out of range");
      is.positives.emplace_back(u, i);
      b.split.assignment.push_back(part_code(line.substr(c2 + 1)));
    }
  }
  b.split.seed = b.seed;

  is.user_reviews = read_reviews(dir + "/user_reviews.bin");
  is.item_reviews = read_reviews(dir + "/item_reviews.bin");
  if (is.user_reviews.size() != is.num_users ||
      is.item_reviews.size() != is.num_items)
    throw std::runtime_error(dir + ": review tables out of sync with entities");

  if (manifest.value("has_vectors", false)) {
    auto in = io::open_in(dir + "/word_vectors.bin", /*binary=*/true);
    io::expect_magic(in, kVectorMagic, "word vector block");
    WordSemanticTable t;
    std::uint32_t vocab = io::read_u32(in, "vector vocab");
    std::uint32_t dim = io::read_u32(in, "vector dim");
    if (vocab != is.words.size())
      throw std::runtime_error(dir + ": vector block out of sync with words");
    t.S = Matrix(vocab, dim);
    for (auto& v : t.S.data)
      v = static_cast<double>(io::read_f32(in, "vector value"));
    t.tokens = is.words;
    for (std::uint32_t w = 0; w < vocab; ++w) t.index.emplace(is.words[w], w);
    b.table = std::move(t);
  }
  return b;
}

}  // namespace xdr
