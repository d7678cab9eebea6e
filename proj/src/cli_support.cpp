#include "xdr/cli_support.hpp"

#include <fstream>
#include <stdexcept>

#include "xdr/io.hpp"
#include "xdr/kernels.hpp"
#include "xdr/ops.hpp"

namespace xdr {

Checkpoint bank_to_checkpoint(const RepresentationBank& bank,
                              const std::string& kind,
                              const std::string& config_echo,
                              std::uint64_t seed) {
  Checkpoint c;
  c.kind = kind;
  c.config_echo = config_echo;
  c.seed = seed;
  c.add("U", bank.U);
  c.add("V", bank.V);
  if (bank.text) {
    c.add("E", bank.text->user);
    c.add("F", bank.text->item);
  }
  return c;
}

RepresentationBank bank_from_checkpoint(const Checkpoint& ckpt) {
  RepresentationBank bank;
  bank.U = ckpt.require("U");
  bank.V = ckpt.require("V");
  if (ckpt.find("E")) {
    bank.text = TextualFeatures{ckpt.require("E"), ckpt.require("F")};
  }
  return bank;
}

Checkpoint tmn_to_checkpoint(const MemoryKeys& keys,
                             const TextualFeatures& features,
                             const std::string& config_echo,
                             std::uint64_t seed) {
  Checkpoint c;
  c.kind = "tmn";
  c.config_echo = config_echo;
  c.seed = seed;
  c.add("P", keys.P);
  c.add("Q", keys.Q);
  c.add("T", keys.T);
  c.add("E", features.user);
  c.add("F", features.item);
  return c;
}

Checkpoint itempop_checkpoint(const std::vector<double>& scores,
                              const std::string& config_echo,
                              std::uint64_t seed) {
  Checkpoint c;
  c.kind = "itempop";
  c.config_echo = config_echo;
  c.seed = seed;
  Matrix s(1, scores.size());
  s.data = scores;
  c.add("scores", std::move(s));
  return c;
}

ScoreFn scorer_from_checkpoint(const Checkpoint& ckpt,
                               const DatasetBundle& data,
                               bool target_domain) {
  std::size_t n = data.iset.num_items;
  if (ckpt.kind == "itempop") {
    Matrix scores = ckpt.require("scores");
    if (scores.size() != n)
      throw std::runtime_error("itempop checkpoint does not match dataset");
    return [scores, n](std::uint32_t, std::span<double> out) {
      for (std::size_t i = 0; i < n; ++i) out[i] = scores.data[i];
    };
  }
  if (ckpt.kind == "mf" || ckpt.kind == "tcf" || ckpt.kind == "wtcf") {
    auto bank = std::make_shared<RepresentationBank>(bank_from_checkpoint(ckpt));
    if (bank->U.rows != data.iset.num_users || bank->V.rows != n)
      throw std::runtime_error(ckpt.kind + " checkpoint does not match dataset");
    return [bank, n](std::uint32_t u, std::span<double> out) {
      for (std::uint32_t i = 0; i < n; ++i) out[i] = cf_score(u, i, *bank);
    };
  }
  if (ckpt.kind == "tmn") {
    auto e = std::make_shared<Matrix>(ckpt.require("E"));
    auto f = std::make_shared<Matrix>(ckpt.require("F"));
    if (e->rows != data.iset.num_users || f->rows != n)
      throw std::runtime_error("tmn checkpoint does not match dataset");
    return [e, f, n](std::uint32_t u, std::span<double> out) {
      for (std::uint32_t i = 0; i < n; ++i)
        out[i] = kernels::dot(e->row(u).data(), f->row(i).data(), e->cols);
    };
  }
  if (ckpt.kind == "tdar") {
    auto bank = std::make_shared<RepresentationBank>();
    const char* prefix = target_domain ? "target" : "source";
    bank->U = ckpt.require(std::string(prefix) + ".U");
    bank->V = ckpt.require(std::string(prefix) + ".V");
    bank->text = TextualFeatures{ckpt.require(std::string(prefix) + ".E"),
                                 ckpt.require(std::string(prefix) + ".F")};
    if (bank->U.rows != data.iset.num_users || bank->V.rows != n)
      throw std::runtime_error("tdar checkpoint does not match dataset");
    return [bank, n](std::uint32_t u, std::span<double> out) {
      for (std::uint32_t i = 0; i < n; ++i) out[i] = cf_score(u, i, *bank);
    };
  }
  throw std::runtime_error("unknown checkpoint kind '" + ckpt.kind + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
  auto out = io::open_out(path, /*binary=*/true);
  out << content;
}

MetricsReport evaluate_checkpoint(const Checkpoint& ckpt,
                                  const DatasetBundle& data,
                                  const std::vector<std::size_t>& ks,
                                  CandidatePolicy policy, SplitPart part,
                                  const std::string& model_name,
                                  std::uint64_t seed, bool target_domain) {
  auto scorer = scorer_from_checkpoint(ckpt, data, target_domain);
  return evaluate_ranking(data, part, scorer, ks, policy, model_name, seed);
}

DatasetBundle make_toy_bundle(std::size_t users, std::size_t items,
                              std::size_t vocab, std::size_t k1,
                              double density, std::uint64_t seed) {
  SplitRng rng(seed);
  WordSemanticTable table;
  table.S = Matrix(vocab, k1);
  auto s_rng = rng.fork("S");
  for (auto& v : table.S.data) v = s_rng.next_gaussian(1.0);
  for (std::uint32_t w = 0; w < vocab; ++w) {
    table.tokens.push_back("w" + std::to_string(w));
    table.index.emplace(table.tokens.back(), w);
  }

  auto pair_rng = rng.fork("pairs");
  auto word_rng = rng.fork("words");
  std::vector<RawRecord> records;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items; ++i) {
      if (pair_rng.next_double() >= density) continue;
      RawRecord rec;
      rec.user_key = "u" + std::to_string(u);
      rec.item_key = "i" + std::to_string(i);
      rec.rating = 5.0;
      for (int j = 0; j < 4; ++j)
        rec.tokens.push_back(table.tokens[word_rng.next_below(vocab)]);
      records.push_back(std::move(rec));
    }
  }
  return prepare_dataset(binarize(std::move(records)), 1, 1.0, seed, &table,
                         "toy");
}

namespace {

GradCheckResult check_result(const std::string& name, double err) {
  return {name, err, err < 1e-4};
}

double tmn_fd(std::uint64_t seed, bool inject_bug) {
  DatasetBundle toy = make_toy_bundle(8, 8, 20, 6, 0.5, seed);
  SplitRng rng(seed);
  MemoryKeys keys =
      MemoryKeys::init(toy.iset.num_users, toy.iset.num_items,
                       toy.iset.words.size(), 4, rng.fork("keys"));
  // Spread the keys out so the attention softmax is not flat.
  auto spread = rng.fork("spread");
  for (auto& v : keys.P.data) v = spread.next_gaussian(0.5);
  for (auto& v : keys.Q.data) v = spread.next_gaussian(0.5);
  for (auto& v : keys.T.data) v = spread.next_gaussian(0.5);

  Batch batch;
  auto b_rng = rng.fork("batch");
  for (int j = 0; j < 12; ++j) {
    batch.push_back(
        {static_cast<std::uint32_t>(b_rng.next_below(toy.iset.num_users)),
         static_cast<std::uint32_t>(b_rng.next_below(toy.iset.num_items)),
         static_cast<double>(b_rng.next_below(2)), 1.0});
  }
  double lambda = 0.05;
  TmnGradients g;
  tmn_loss_and_gradients(batch, keys, toy.iset, toy.table->S, lambda, &g);
  if (inject_bug) kernels::scale(g.T.data.data(), 1.01, g.T.size());
  std::vector<Matrix*> params{&keys.P, &keys.Q, &keys.T};
  std::vector<Matrix> analytic{g.P, g.Q, g.T};
  auto loss = [&] {
    return tmn_loss(batch, keys, toy.iset, toy.table->S, lambda);
  };
  return finite_difference_check(loss, params, analytic);
}

double cf_fd(std::uint64_t seed, bool with_text) {
  SplitRng rng(seed);
  RepresentationBank bank;
  auto u_rng = rng.fork("U");
  auto v_rng = rng.fork("V");
  bank.U = Matrix::randn(8, 5, 0.5, u_rng);
  bank.V = Matrix::randn(8, 5, 0.5, v_rng);
  if (with_text) {
    auto e_rng = rng.fork("E");
    auto f_rng = rng.fork("F");
    bank.text = TextualFeatures{Matrix::randn(8, 3, 0.5, e_rng),
                                Matrix::randn(8, 3, 0.5, f_rng)};
  }
  Batch batch;
  auto b_rng = rng.fork("batch");
  for (int j = 0; j < 12; ++j) {
    batch.push_back({static_cast<std::uint32_t>(b_rng.next_below(8)),
                     static_cast<std::uint32_t>(b_rng.next_below(8)),
                     static_cast<double>(b_rng.next_below(2)),
                     1.0 + b_rng.next_double()});
  }
  double lambda = 0.05;
  CfGradients g;
  cf_loss_and_gradients(batch, bank, lambda, &g);
  std::vector<Matrix*> params{&bank.U, &bank.V};
  std::vector<Matrix> analytic{g.U, g.V};
  auto loss = [&] { return cf_loss(batch, bank, lambda); };
  return finite_difference_check(loss, params, analytic);
}

double classifier_fd(std::uint64_t seed) {
  SplitRng rng(seed);
  DomainClassifier phi = DomainClassifier::init(8, {6, 5, 4}, rng.fork("phi"));
  Matrix src = Matrix::randn(3, 8, 1.0, rng);
  Matrix tgt = Matrix::randn(3, 8, 1.0, rng);

  ClassifierGradients g = ClassifierGradients::like(phi);
  Matrix d_src, d_tgt;
  domain_loss_and_gradients(src, tgt, phi, &g, &d_src, &d_tgt);

  std::vector<Matrix*> params;
  std::vector<Matrix> analytic;
  for (std::size_t l = 0; l < phi.W.size(); ++l) {
    params.push_back(&phi.W[l]);
    analytic.push_back(g.W[l]);
    params.push_back(&phi.b[l]);
    analytic.push_back(g.b[l]);
  }
  // Input rows are parameters too: Eq.-style updates feed their gradients
  // back into the embeddings.
  params.push_back(&src);
  analytic.push_back(d_src);
  params.push_back(&tgt);
  analytic.push_back(d_tgt);

  auto loss = [&] { return domain_loss(src, tgt, phi); };
  return finite_difference_check(loss, params, analytic);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed,
                                                 bool inject_bug) {
  std::vector<GradCheckResult> out;
  out.push_back(check_result("tmn.PQT", tmn_fd(seed, inject_bug)));
  out.push_back(check_result("cf.mf", cf_fd(seed + 1, false)));
  out.push_back(check_result("cf.tcf", cf_fd(seed + 2, true)));
  out.push_back(check_result("classifier.domain", classifier_fd(seed + 3)));
  return out;
}

}  // namespace xdr
