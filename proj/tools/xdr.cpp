// Experiment driver: dataset preparation, model training, transfer runs,
// evaluation and diagnostics. Every command is a pure function of its
// effective configuration (file < flags) plus the seed, and every artifact
// embeds that configuration, so reruns are byte-identical.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xdr/adversary.hpp"
#include "xdr/cf_models.hpp"
#include "xdr/cli_support.hpp"
#include "xdr/config.hpp"
#include "xdr/corpus.hpp"
#include "xdr/eval.hpp"
#include "xdr/io.hpp"
#include "xdr/serialize.hpp"
#include "xdr/synth.hpp"
#include "xdr/tmn.hpp"

namespace fs = std::filesystem;
using namespace xdr;

namespace {

// Collects raw flag strings for one subcommand and merges them over the
// optional config file; flags win. Values stay strings until a typed getter
// parses them, so the echo shows exactly what was requested.
class ArgSet {
 public:
  explicit ArgSet(CLI::App* cmd) : cmd_(cmd) {
    cmd_->add_option("--config", config_path_,
                     "config file (key = value lines or a flat JSON object)");
  }

  CLI::Option* opt(const std::string& flag, const std::string& key,
                   const std::string& help) {
    auto slot = std::make_shared<std::string>();
    auto* o = cmd_->add_option(flag, *slot, help);
    entries_.push_back({key, slot, o});
    return o;
  }

  void flag(const std::string& flag_name, const std::string& key,
            const std::string& help) {
    auto slot = std::make_shared<bool>(false);
    auto* o = cmd_->add_flag(flag_name, *slot, help);
    flags_.push_back({key, slot, o});
  }

  ExperimentConfig resolve(const std::string& command) const {
    ExperimentConfig cfg;
    if (!config_path_.empty()) cfg = ExperimentConfig::from_file(config_path_);
    for (const auto& e : entries_)
      if (e.opt->count() > 0) cfg.set(e.key, *e.slot);
    for (const auto& f : flags_)
      if (f.opt->count() > 0) cfg.set(f.key, *f.slot ? "true" : "false");
    cfg.set("command", command);
    return cfg;
  }

 private:
  struct Entry {
    std::string key;
    std::shared_ptr<std::string> slot;
    CLI::Option* opt;
  };
  struct Flag {
    std::string key;
    std::shared_ptr<bool> slot;
    CLI::Option* opt;
  };
  CLI::App* cmd_;
  std::string config_path_;
  std::vector<Entry> entries_;
  std::vector<Flag> flags_;
};

std::string require_str(const ExperimentConfig& cfg, const std::string& key,
                        const std::string& command) {
  std::string v = cfg.get_str(key, "");
  if (v.empty())
    throw std::runtime_error(command + ": missing required option '" + key +
                             "'");
  return v;
}

std::string out_dir(const ExperimentConfig& cfg, const std::string& command) {
  std::string out = require_str(cfg, "out", command);
  fs::create_directories(out);
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Every CSV artifact leads with the effective configuration as comments.
std::string commented_config(const ExperimentConfig& cfg) {
  std::string out;
  std::istringstream lines(cfg.echo());
  std::string line;
  while (std::getline(lines, line)) out += "# " + line + "\n";
  return out;
}

void write_config(const std::string& dir, const ExperimentConfig& cfg) {
  write_text_file(dir + "/config.txt", cfg.echo());
}

CandidatePolicy policy_from(const ExperimentConfig& cfg) {
  std::string p = cfg.get_str("policy", "exclude-train");
  if (p == "exclude-train") return CandidatePolicy::exclude_train;
  if (p == "all-items") return CandidatePolicy::all_items;
  throw std::runtime_error("unknown candidate policy '" + p +
                           "' (expected exclude-train or all-items)");
}

SplitPart split_from(const std::string& name) {
  if (name == "train") return SplitPart::train;
  if (name == "validation" || name == "val") return SplitPart::validation;
  if (name == "test") return SplitPart::test;
  throw std::runtime_error("unknown split '" + name +
                           "' (expected train, validation or test)");
}

std::string trace_csv(const ExperimentConfig& cfg,
                      const std::vector<double>& val_f1) {
  std::string out = commented_config(cfg) + "epoch,val_f1\n";
  for (std::size_t e = 0; e < val_f1.size(); ++e)
    out += std::to_string(e) + "," + fmt(val_f1[e]) + "\n";
  return out;
}

void write_metrics(const std::string& dir, const ExperimentConfig& cfg,
                   const MetricsReport& report) {
  write_text_file(dir + "/metrics.csv", commented_config(cfg) + report.to_csv());
  nlohmann::json doc{{"seed", cfg.get_u64("seed", 0)},
                     {"config", cfg.echo()},
                     {"metrics", nlohmann::json::parse(report.to_json())}};
  write_text_file(dir + "/metrics.json", doc.dump(2) + "\n");
}

MetricsReport eval_val_and_test(const Checkpoint& ckpt,
                                const DatasetBundle& data,
                                const std::vector<std::size_t>& ks,
                                CandidatePolicy policy,
                                const std::string& model, std::uint64_t seed,
                                bool target_domain = true) {
  MetricsReport all = evaluate_checkpoint(ckpt, data, ks, policy,
                                          SplitPart::validation, model, seed,
                                          target_domain);
  MetricsReport test = evaluate_checkpoint(ckpt, data, ks, policy,
                                           SplitPart::test, model, seed,
                                           target_domain);
  all.rows.insert(all.rows.end(), test.rows.begin(), test.rows.end());
  return all;
}

// ---------------------------------------------------------------- prepare

int run_prepare(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("prepare");
  std::string reviews = resolve_data_path(require_str(cfg, "reviews", "prepare"));
  std::string vectors = cfg.get_str("vectors", "");
  std::string out = out_dir(cfg, "prepare");
  std::uint32_t core = static_cast<std::uint32_t>(cfg.get_size("core", 1));
  double keep = cfg.get_double("keep_fraction", 1.0);
  std::uint64_t seed = cfg.get_u64("seed", 1);
  std::string name = cfg.get_str("name", fs::path(out).filename().string());

  cfg.set("reviews", reviews);
  cfg.set("core", std::to_string(core));
  cfg.set("keep_fraction", fmt(keep));
  cfg.set("seed", std::to_string(seed));
  cfg.set("name", name);

  auto in = io::open_in(reviews, /*binary=*/false);
  ParseStats stats;
  std::vector<RawRecord> records = parse_reviews(in, &stats);
  PositiveSet positives = binarize(std::move(records));

  WordSemanticTable table;
  const WordSemanticTable* table_ptr = nullptr;
  if (!vectors.empty()) {
    std::string vpath = resolve_data_path(vectors);
    cfg.set("vectors", vpath);
    table = load_word_vectors(vpath);
    table_ptr = &table;
  }

  DatasetBundle bundle =
      prepare_dataset(std::move(positives), core, keep, seed, table_ptr, name);
  save_bundle(bundle, out);
  write_config(out, cfg);

  DatasetStats ds = dataset_stats(bundle.iset);
  std::cout << "prepared " << name << ": " << ds.users << " users, "
            << ds.items << " items, " << ds.interactions
            << " interactions, sparsity " << ds.sparsity_percent << "\n"
            << "parsed lines " << stats.lines << " (malformed "
            << stats.malformed << ")\n"
            << "bundle written to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ train

int run_train(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("train");
  std::string data_dir = resolve_data_path(require_str(cfg, "data", "train"));
  std::string model = require_str(cfg, "model", "train");
  std::string out = out_dir(cfg, "train");
  std::uint64_t seed = cfg.get_u64("seed", 1);
  std::vector<std::size_t> ks = cfg.get_size_list("k", kDefaultKs);
  CandidatePolicy policy = policy_from(cfg);
  std::string features_path = cfg.get_str("features", "");

  cfg.set("data", data_dir);
  cfg.set("seed", std::to_string(seed));
  cfg.set("k", join_sizes(ks));
  cfg.set("policy", candidate_policy_name(policy));

  DatasetBundle data = load_bundle(data_dir);

  Checkpoint ckpt;
  std::vector<double> trace;

  if (model == "itempop") {
    std::vector<IndexPair> train_pairs;
    for (std::size_t p = 0; p < data.iset.positives.size(); ++p)
      if (data.split.assignment[p] ==
          static_cast<std::uint8_t>(SplitPart::train))
        train_pairs.push_back(data.iset.positives[p]);
    auto scores = item_pop_scores(train_pairs, data.iset.num_items);
    ckpt = itempop_checkpoint(scores, cfg.echo(), seed);
    MetricsReport val = evaluate_checkpoint(ckpt, data, {2}, policy,
                                            SplitPart::validation, model, seed);
    trace.push_back(val.at_k(2).f1);
  } else if (model == "tmn") {
    TmnConfig tc;
    tc.k2 = cfg.get_size("k2", tc.k2);
    tc.lr = cfg.get_double("lr", tc.lr);
    tc.lambda = cfg.get_double("lambda", tc.lambda);
    tc.rho = cfg.get_size("rho", tc.rho);
    tc.batch_size = cfg.get_size("batch_size", tc.batch_size);
    tc.max_iters = cfg.get_size("max_iters", tc.max_iters);
    tc.seed = seed;
    cfg.set("k2", std::to_string(tc.k2));
    cfg.set("lr", fmt(tc.lr));
    cfg.set("lambda", fmt(tc.lambda));
    cfg.set("rho", std::to_string(tc.rho));
    cfg.set("batch_size", std::to_string(tc.batch_size));
    cfg.set("max_iters", std::to_string(tc.max_iters));

    TmnResult r = train_tmn(data, tc);
    ckpt = tmn_to_checkpoint(r.keys, r.features, cfg.echo(), seed);
    trace = r.val_f1_trace;
    export_features(r.features, out + "/features.bin");
  } else {
    CfKind kind = cf_kind_from_name(model);
    CfConfig cc;
    cc.k3 = cfg.get_size("k3", cc.k3);
    cc.lr = cfg.get_double("lr", cc.lr);
    cc.lambda = cfg.get_double("lambda", cc.lambda);
    cc.rho = cfg.get_size("rho", cc.rho);
    cc.batch_size = cfg.get_size("batch_size", cc.batch_size);
    cc.max_iters = cfg.get_size("max_iters", cc.max_iters);
    cc.seed = seed;
    cfg.set("k3", std::to_string(cc.k3));
    cfg.set("lr", fmt(cc.lr));
    cfg.set("lambda", fmt(cc.lambda));
    cfg.set("rho", std::to_string(cc.rho));
    cfg.set("batch_size", std::to_string(cc.batch_size));
    cfg.set("max_iters", std::to_string(cc.max_iters));

    TextualFeatures features;
    const TextualFeatures* fp = nullptr;
    if (!features_path.empty()) {
      std::string fpath = resolve_data_path(features_path);
      cfg.set("features", fpath);
      features = import_features(fpath);
      fp = &features;
    }
    CfResult r = train_cf(data, kind, cc, fp);
    ckpt = bank_to_checkpoint(r.best, model, cfg.echo(), seed);
    trace = r.val_f1_trace;
  }

  save_checkpoint(ckpt, out + "/checkpoint.bin");
  write_text_file(out + "/trace.csv", trace_csv(cfg, trace));
  MetricsReport report = eval_val_and_test(ckpt, data, ks, policy, model, seed);
  write_metrics(out, cfg, report);
  write_config(out, cfg);

  double best = trace.empty() ? 0.0 : *std::max_element(trace.begin(), trace.end());
  std::cout << "trained " << model << " on " << data.name << " ("
            << trace.size() << " epochs, best val F1@2 " << fmt(best) << ")\n"
            << "artifacts written to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------- train-tdar

int run_train_tdar(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("train-tdar");
  std::string source_dir =
      resolve_data_path(require_str(cfg, "source", "train-tdar"));
  std::string target_dir =
      resolve_data_path(require_str(cfg, "target", "train-tdar"));
  std::string sfeat_path =
      resolve_data_path(require_str(cfg, "source_features", "train-tdar"));
  std::string tfeat_path =
      resolve_data_path(require_str(cfg, "target_features", "train-tdar"));
  std::string pretrain = cfg.get_str("pretrain", "");
  std::string resume = cfg.get_str("resume", "");
  std::string out = out_dir(cfg, "train-tdar");
  std::uint64_t seed = cfg.get_u64("seed", 1);
  std::vector<std::size_t> ks = cfg.get_size_list("k", kDefaultKs);
  CandidatePolicy policy = policy_from(cfg);

  TdarConfig tc;
  tc.k3 = cfg.get_size("k3", tc.k3);
  tc.eta_s = cfg.get_double("eta_s", tc.eta_s);
  tc.eta_t = cfg.get_double("eta_t", tc.eta_t);
  tc.eta_plus = cfg.get_double("eta_plus", tc.eta_plus);
  tc.eta_minus = cfg.get_double("eta_minus", tc.eta_minus);
  tc.lambda_s = cfg.get_double("lambda_s", tc.lambda_s);
  tc.lambda_t = cfg.get_double("lambda_t", tc.lambda_t);
  tc.rho = cfg.get_size("rho", tc.rho);
  tc.batch_size = cfg.get_size("batch_size", tc.batch_size);
  tc.max_iters = cfg.get_size("max_iters", tc.max_iters);
  tc.adv_rows = cfg.get_size("adv_rows", tc.adv_rows);
  tc.seed = seed;
  tc.stage = tdar_stage_from_name(cfg.get_str("stage", "full"));
  tc.use_adam = cfg.get_bool("use_adam", true);

  cfg.set("source", source_dir);
  cfg.set("target", target_dir);
  cfg.set("source_features", sfeat_path);
  cfg.set("target_features", tfeat_path);
  cfg.set("seed", std::to_string(seed));
  cfg.set("k", join_sizes(ks));
  cfg.set("policy", candidate_policy_name(policy));
  cfg.set("k3", std::to_string(tc.k3));
  cfg.set("eta_s", fmt(tc.eta_s));
  cfg.set("eta_t", fmt(tc.eta_t));
  cfg.set("eta_plus", fmt(tc.eta_plus));
  cfg.set("eta_minus", fmt(tc.eta_minus));
  cfg.set("lambda_s", fmt(tc.lambda_s));
  cfg.set("lambda_t", fmt(tc.lambda_t));
  cfg.set("rho", std::to_string(tc.rho));
  cfg.set("batch_size", std::to_string(tc.batch_size));
  cfg.set("max_iters", std::to_string(tc.max_iters));
  cfg.set("adv_rows", std::to_string(tc.adv_rows));
  cfg.set("stage", tdar_stage_name(tc.stage));
  cfg.set("use_adam", tc.use_adam ? "true" : "false");

  DatasetBundle source = load_bundle(source_dir);
  DatasetBundle target = load_bundle(target_dir);
  TextualFeatures sfeat = import_features(sfeat_path);
  TextualFeatures tfeat = import_features(tfeat_path);

  RepresentationBank pre_bank;
  const RepresentationBank* pre = nullptr;
  if (!pretrain.empty()) {
    std::string ppath = resolve_data_path(pretrain);
    cfg.set("pretrain", ppath);
    pre_bank = bank_from_checkpoint(load_checkpoint(ppath));
    pre = &pre_bank;
  }

  DualDomainState resumed_state;
  TdarOptimizer resumed_opt;
  std::size_t resumed_epochs = 0;
  TdarInit init;
  if (!resume.empty()) {
    std::string rpath = resolve_data_path(resume);
    cfg.set("resume", rpath);
    tdar_from_checkpoint(load_checkpoint(rpath), &resumed_state, &resumed_opt,
                         &resumed_epochs);
    init = {&resumed_state, &resumed_opt, resumed_epochs};
  }

  TdarResult r = train_tdar(source, target, sfeat, tfeat, pre, tc, init);

  save_checkpoint(
      tdar_to_checkpoint(r.last, r.last_opt, r.epochs_done, cfg.echo(), seed),
      out + "/checkpoint.bin");
  Checkpoint best =
      tdar_to_checkpoint(r.best, TdarOptimizer::like(r.best, tc.use_adam),
                         r.epochs_done, cfg.echo(), seed);
  save_checkpoint(best, out + "/best.bin");

  std::string trace = commented_config(cfg) +
                      "epoch,target_val_f1,user_acc,item_acc\n";
  for (std::size_t e = 0; e < r.target_val_f1_trace.size(); ++e) {
    trace += std::to_string(e) + "," + fmt(r.target_val_f1_trace[e]) + "," +
             fmt(r.user_acc_trace[e]) + "," + fmt(r.item_acc_trace[e]) + "\n";
  }
  write_text_file(out + "/trace.csv", trace);

  if (tc.stage == TdarStage::full) {
    MetricsReport report =
        eval_val_and_test(best, target, ks, policy, "tdar", seed, true);
    write_metrics(out, cfg, report);
  }
  write_config(out, cfg);

  std::cout << "tdar stage " << tdar_stage_name(tc.stage) << ": "
            << r.epochs_done << " epochs done\n";
  if (!r.user_acc_trace.empty()) {
    std::cout << "classifier accuracy (user/item): "
              << fmt(r.user_acc_trace.back()) << " / "
              << fmt(r.item_acc_trace.back()) << "\n";
  }
  if (tc.stage == TdarStage::full) {
    std::cout << "best target val F1@2 " << fmt(r.best_val_f1) << " at epoch "
              << r.best_epoch << "\n";
  }
  std::cout << "artifacts written to " << out << "\n";
  return 0;
}

// --------------------------------------------------------------- evaluate

int run_evaluate(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("evaluate");
  std::string ckpt_path =
      resolve_data_path(require_str(cfg, "checkpoint", "evaluate"));
  std::string data_dir = resolve_data_path(require_str(cfg, "data", "evaluate"));
  std::string out = out_dir(cfg, "evaluate");
  SplitPart part = split_from(cfg.get_str("split", "test"));
  std::vector<std::size_t> ks = cfg.get_size_list("k", kDefaultKs);
  CandidatePolicy policy = policy_from(cfg);
  std::string domain = cfg.get_str("domain", "target");
  if (domain != "source" && domain != "target")
    throw std::runtime_error("unknown domain '" + domain +
                             "' (expected source or target)");

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  DatasetBundle data = load_bundle(data_dir);
  std::uint64_t seed = cfg.get_u64("seed", ckpt.seed);
  std::string model = cfg.get_str("model", ckpt.kind);

  cfg.set("checkpoint", ckpt_path);
  cfg.set("data", data_dir);
  cfg.set("split", cfg.get_str("split", "test"));
  cfg.set("k", join_sizes(ks));
  cfg.set("policy", candidate_policy_name(policy));
  cfg.set("domain", domain);
  cfg.set("seed", std::to_string(seed));
  cfg.set("model", model);

  MetricsReport report = evaluate_checkpoint(ckpt, data, ks, policy, part,
                                             model, seed, domain == "target");
  write_metrics(out, cfg, report);
  write_config(out, cfg);

  std::cout << report.to_csv();
  return 0;
}

// ------------------------------------------------------------------- grid

struct GridTrial {
  std::string phase;
  double lr = 0.0;
  double lambda = 0.0;
  double val_f1 = -1.0;
};

void run_grid_trials(const DatasetBundle& data, const std::string& model,
                     const ExperimentConfig& cfg,
                     const TextualFeatures* features, std::uint64_t seed,
                     std::size_t jobs, std::vector<GridTrial>& trials) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t idx = next.fetch_add(1);
      if (idx >= trials.size()) return;
      GridTrial& t = trials[idx];
      if (model == "tmn") {
        TmnConfig tc;
        tc.k2 = cfg.get_size("k2", tc.k2);
        tc.rho = cfg.get_size("rho", tc.rho);
        tc.batch_size = cfg.get_size("batch_size", tc.batch_size);
        tc.max_iters = cfg.get_size("max_iters", tc.max_iters);
        tc.seed = seed;
        tc.lr = t.lr;
        tc.lambda = t.lambda;
        t.val_f1 = train_tmn(data, tc).best_val_f1;
      } else {
        CfConfig cc;
        cc.k3 = cfg.get_size("k3", cc.k3);
        cc.rho = cfg.get_size("rho", cc.rho);
        cc.batch_size = cfg.get_size("batch_size", cc.batch_size);
        cc.max_iters = cfg.get_size("max_iters", cc.max_iters);
        cc.seed = seed;
        cc.lr = t.lr;
        cc.lambda = t.lambda;
        t.val_f1 =
            train_cf(data, cf_kind_from_name(model), cc, features).best_val_f1;
      }
    }
  };
  std::vector<std::thread> pool;
  std::size_t n = std::min(jobs, trials.size());
  for (std::size_t w = 0; w + 1 < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

int run_grid(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("grid");
  std::string data_dir = resolve_data_path(require_str(cfg, "data", "grid"));
  std::string model = require_str(cfg, "model", "grid");
  std::string out = out_dir(cfg, "grid");
  std::string phase = cfg.get_str("phase", "both");
  std::uint64_t seed = cfg.get_u64("seed", 1);
  std::size_t jobs =
      cfg.get_size("jobs", std::max(1u, std::thread::hardware_concurrency()));
  if (phase != "coarse" && phase != "fine" && phase != "both")
    throw std::runtime_error("unknown grid phase '" + phase +
                             "' (expected coarse, fine or both)");
  if (model == "itempop")
    throw std::runtime_error("grid: itempop has no hyperparameters to search");

  cfg.set("data", data_dir);
  cfg.set("seed", std::to_string(seed));
  cfg.set("phase", phase);
  cfg.set("jobs", std::to_string(jobs));

  DatasetBundle data = load_bundle(data_dir);
  TextualFeatures features;
  const TextualFeatures* fp = nullptr;
  std::string features_path = cfg.get_str("features", "");
  if (!features_path.empty()) {
    std::string fpath = resolve_data_path(features_path);
    cfg.set("features", fpath);
    features = import_features(fpath);
    fp = &features;
  }

  const std::vector<double> coarse_lr{0.0001, 0.001, 0.01, 0.1};
  const std::vector<double> coarse_lambda{0.001, 0.01, 0.1, 1.0};
  const std::vector<double> refine{0.2, 0.5, 1.0, 2.0, 5.0};

  std::vector<GridTrial> all;
  double center_lr = cfg.get_double("lr", 0.01);
  double center_lambda = cfg.get_double("lambda", 0.01);

  if (phase == "coarse" || phase == "both") {
    std::vector<GridTrial> coarse;
    for (double lr : coarse_lr)
      for (double lambda : coarse_lambda)
        coarse.push_back({"coarse", lr, lambda, -1.0});
    run_grid_trials(data, model, cfg, fp, seed, jobs, coarse);
    std::size_t best = 0;
    for (std::size_t i = 1; i < coarse.size(); ++i)
      if (coarse[i].val_f1 > coarse[best].val_f1) best = i;
    center_lr = coarse[best].lr;
    center_lambda = coarse[best].lambda;
    all.insert(all.end(), coarse.begin(), coarse.end());
  }
  if (phase == "fine" || phase == "both") {
    // The fine pass is centered on the coarse argmax (or on --lr/--lambda
    // when running fine alone).
    std::vector<GridTrial> fine;
    for (double flr : refine)
      for (double flam : refine)
        fine.push_back({"fine", center_lr * flr, center_lambda * flam, -1.0});
    run_grid_trials(data, model, cfg, fp, seed, jobs, fine);
    all.insert(all.end(), fine.begin(), fine.end());
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i)
    if (all[i].val_f1 > all[best].val_f1) best = i;

  std::string table = commented_config(cfg) + "phase,trial,lr,lambda,val_f1\n";
  for (std::size_t i = 0; i < all.size(); ++i) {
    table += all[i].phase + "," + std::to_string(i) + "," + fmt(all[i].lr) +
             "," + fmt(all[i].lambda) + "," + fmt(all[i].val_f1) + "\n";
  }
  write_text_file(out + "/grid.csv", table);

  ExperimentConfig best_cfg = cfg;
  best_cfg.set("command", "train");
  best_cfg.set("lr", fmt(all[best].lr));
  best_cfg.set("lambda", fmt(all[best].lambda));
  best_cfg.set("best_val_f1", fmt(all[best].val_f1));
  write_text_file(out + "/best.txt", best_cfg.echo());
  write_config(out, cfg);

  std::cout << "grid " << phase << ": " << all.size() << " trials, best lr "
            << fmt(all[best].lr) << " lambda " << fmt(all[best].lambda)
            << " (val F1@2 " << fmt(all[best].val_f1) << ")\n"
            << "artifacts written to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ synth

int run_synth(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("synth");
  std::string out = out_dir(cfg, "synth");

  SynthScenario sc;
  sc.topics = cfg.get_size("topics", sc.topics);
  sc.subtopics = cfg.get_size("subtopics", sc.subtopics);
  sc.users_per_domain = cfg.get_size("users_per_domain", sc.users_per_domain);
  sc.items_per_domain = cfg.get_size("items_per_domain", sc.items_per_domain);
  sc.words_per_subtopic =
      cfg.get_size("words_per_subtopic", sc.words_per_subtopic);
  sc.common_words = cfg.get_size("common_words", sc.common_words);
  sc.k1 = cfg.get_size("k1", sc.k1);
  sc.vector_scale = cfg.get_double("vector_scale", sc.vector_scale);
  sc.subtopic_scale = cfg.get_double("subtopic_scale", sc.subtopic_scale);
  sc.density = cfg.get_double("density", sc.density);
  sc.target_keep = cfg.get_double("keep_fraction", sc.target_keep);
  sc.affinity_same = cfg.get_double("affinity_same", sc.affinity_same);
  sc.affinity_sub = cfg.get_double("affinity_sub", sc.affinity_sub);
  sc.affinity_cross = cfg.get_double("affinity_cross", sc.affinity_cross);
  sc.review_topic_words =
      cfg.get_size("review_topic_words", sc.review_topic_words);
  sc.review_common_words =
      cfg.get_size("review_common_words", sc.review_common_words);
  sc.seed = cfg.get_u64("seed", sc.seed);

  cfg.set("topics", std::to_string(sc.topics));
  cfg.set("subtopics", std::to_string(sc.subtopics));
  cfg.set("users_per_domain", std::to_string(sc.users_per_domain));
  cfg.set("items_per_domain", std::to_string(sc.items_per_domain));
  cfg.set("words_per_subtopic", std::to_string(sc.words_per_subtopic));
  cfg.set("common_words", std::to_string(sc.common_words));
  cfg.set("k1", std::to_string(sc.k1));
  cfg.set("vector_scale", fmt(sc.vector_scale));
  cfg.set("subtopic_scale", fmt(sc.subtopic_scale));
  cfg.set("density", fmt(sc.density));
  cfg.set("keep_fraction", fmt(sc.target_keep));
  cfg.set("affinity_same", fmt(sc.affinity_same));
  cfg.set("affinity_sub", fmt(sc.affinity_sub));
  cfg.set("affinity_cross", fmt(sc.affinity_cross));
  cfg.set("review_topic_words", std::to_string(sc.review_topic_words));
  cfg.set("review_common_words", std::to_string(sc.review_common_words));
  cfg.set("seed", std::to_string(sc.seed));

  SynthOutput synth = generate_synthetic(sc);
  save_bundle(synth.source, out + "/source");
  save_bundle(synth.target, out + "/target");
  write_word_vectors_binary(synth.table, out + "/vectors.bin");
  write_config(out, cfg);

  DatasetStats s = dataset_stats(synth.source.iset);
  DatasetStats t = dataset_stats(synth.target.iset);
  std::cout << "synthetic source: " << s.users << " users, " << s.items
            << " items, " << s.interactions << " interactions, sparsity "
            << s.sparsity_percent << "\n"
            << "synthetic target: " << t.users << " users, " << t.items
            << " items, " << t.interactions << " interactions, sparsity "
            << t.sparsity_percent << "\n"
            << "bundles written to " << out << "\n";
  return 0;
}

// -------------------------------------------------------------------- mmd

int run_mmd(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("mmd");
  std::string a_path = resolve_data_path(require_str(cfg, "a", "mmd"));
  std::string b_path = resolve_data_path(require_str(cfg, "b", "mmd"));
  std::string side = cfg.get_str("side", "user");
  double bandwidth = cfg.get_double("bandwidth", 0.0);
  std::uint64_t seed = cfg.get_u64("seed", 1);
  if (side != "user" && side != "item")
    throw std::runtime_error("unknown side '" + side +
                             "' (expected user or item)");

  cfg.set("a", a_path);
  cfg.set("b", b_path);
  cfg.set("side", side);
  cfg.set("bandwidth", fmt(bandwidth));
  cfg.set("seed", std::to_string(seed));

  TextualFeatures fa = import_features(a_path);
  TextualFeatures fb = import_features(b_path);
  const Matrix& x = side == "user" ? fa.user : fa.item;
  const Matrix& y = side == "user" ? fb.user : fb.item;
  double mmd2 = rbf_mmd2(x, y, bandwidth);

  std::cout << "mmd2 = " << fmt(mmd2) << "\n";
  std::string out = cfg.get_str("out", "");
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file(out + "/mmd.txt",
                    commented_config(cfg) + "mmd2 = " + fmt(mmd2) + "\n");
    write_config(out, cfg);
  }
  return 0;
}

// -------------------------------------------------------------- gradcheck

int run_gradcheck(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("gradcheck");
  std::uint64_t seed = cfg.get_u64("seed", 1);
  bool inject = cfg.get_bool("inject_bug", false);
  cfg.set("seed", std::to_string(seed));
  cfg.set("inject_bug", inject ? "true" : "false");

  std::vector<GradCheckResult> results = run_gradient_checks(seed, inject);
  bool all_pass = true;
  std::string table = "suite,max_rel_err,status\n";
  for (const auto& r : results) {
    std::printf("%-20s %12.3e  %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "PASS" : "FAIL");
    table += r.name + "," + fmt(r.max_rel_err) + "," +
             (r.pass ? "PASS" : "FAIL") + "\n";
    all_pass = all_pass && r.pass;
  }
  std::string out = cfg.get_str("out", "");
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file(out + "/gradcheck.csv", commented_config(cfg) + table);
    write_config(out, cfg);
  }
  if (!all_pass) {
    std::cerr << "error: gradcheck: analytic gradients disagree with finite "
                 "differences\n";
    return 1;
  }
  return 0;
}

// -------------------------------------------------------- export-features

int run_export_features(const ArgSet& args) {
  ExperimentConfig cfg = args.resolve("export-features");
  std::string ckpt_path =
      resolve_data_path(require_str(cfg, "checkpoint", "export-features"));
  std::string out = require_str(cfg, "out", "export-features");

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ckpt.kind != "tmn")
    throw std::runtime_error(
        "export-features: checkpoint kind '" + ckpt.kind +
        "' carries no textual features (expected tmn)");
  TextualFeatures f{ckpt.require("E"), ckpt.require("F")};
  if (fs::path(out).has_parent_path())
    fs::create_directories(fs::path(out).parent_path());
  export_features(f, out);
  std::cout << "features written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-enhanced cross-domain recommendation laboratory"};
  app.require_subcommand(1);
  int rc = 0;

  auto prepare = std::make_shared<ArgSet>(
      app.add_subcommand("prepare", "build a dataset bundle from raw reviews"));
  prepare->opt("--reviews", "reviews", "line-delimited JSON review file");
  prepare->opt("--vectors", "vectors", "pretrained word vectors (text or binary)");
  prepare->opt("--out", "out", "output bundle directory");
  prepare->opt("--core", "core", "k-core threshold (default 1)");
  prepare->opt("--keep-fraction", "keep_fraction",
               "fraction of interactions kept after k-core (default 1.0)");
  prepare->opt("--seed", "seed", "random seed (default 1)");
  prepare->opt("--name", "name", "dataset name (default: output directory name)");

  auto train = std::make_shared<ArgSet>(app.add_subcommand(
      "train", "train itempop, mf, tcf, wtcf or tmn on one bundle"));
  train->opt("--data", "data", "dataset bundle directory");
  train->opt("--model", "model", "itempop | mf | tcf | wtcf | tmn");
  train->opt("--out", "out", "output directory");
  train->opt("--seed", "seed", "random seed (default 1)");
  train->opt("--features", "features", "frozen textual features (tcf/wtcf)");
  train->opt("--lr", "lr", "learning rate");
  train->opt("--lambda", "lambda", "L2 regularization weight");
  train->opt("--rho", "rho", "negatives sampled per positive");
  train->opt("--k2", "k2", "attention key width (tmn)");
  train->opt("--k3", "k3", "embedding width (mf/tcf/wtcf)");
  train->opt("--batch-size", "batch_size", "minibatch size");
  train->opt("--max-iters", "max_iters", "maximum training epochs");
  train->opt("--k", "k", "evaluation cutoffs, comma separated");
  train->opt("--policy", "policy", "exclude-train | all-items");

  auto tdar = std::make_shared<ArgSet>(app.add_subcommand(
      "train-tdar", "adversarial transfer training across two bundles"));
  tdar->opt("--source", "source", "source bundle directory");
  tdar->opt("--target", "target", "target bundle directory");
  tdar->opt("--source-features", "source_features", "frozen source features");
  tdar->opt("--target-features", "target_features", "frozen target features");
  tdar->opt("--pretrain", "pretrain", "pretrained source checkpoint");
  tdar->opt("--resume", "resume", "tdar checkpoint to resume from");
  tdar->opt("--stage", "stage", "classifier | align | full (default full)");
  tdar->opt("--out", "out", "output directory");
  tdar->opt("--seed", "seed", "random seed (default 1)");
  tdar->opt("--k3", "k3", "embedding width");
  tdar->opt("--eta-s", "eta_s", "source prediction learning rate");
  tdar->opt("--eta-t", "eta_t", "target prediction learning rate");
  tdar->opt("--eta-plus", "eta_plus", "classifier learning rate");
  tdar->opt("--eta-minus", "eta_minus", "embedding adversarial rate");
  tdar->opt("--lambda-s", "lambda_s", "source regularization");
  tdar->opt("--lambda-t", "lambda_t", "target regularization");
  tdar->opt("--rho", "rho", "source negatives per positive");
  tdar->opt("--batch-size", "batch_size", "prediction minibatch size");
  tdar->opt("--max-iters", "max_iters", "total epochs (absolute, incl. resumed)");
  tdar->opt("--adv-rows", "adv_rows", "domain rows per side per step");
  tdar->opt("--k", "k", "evaluation cutoffs, comma separated");
  tdar->opt("--policy", "policy", "exclude-train | all-items");
  tdar->opt("--use-adam", "use_adam", "true | false (default true)");

  auto evaluate = std::make_shared<ArgSet>(app.add_subcommand(
      "evaluate", "rank and score a checkpoint against a bundle split"));
  evaluate->opt("--checkpoint", "checkpoint", "model checkpoint");
  evaluate->opt("--data", "data", "dataset bundle directory");
  evaluate->opt("--out", "out", "output directory");
  evaluate->opt("--split", "split", "train | validation | test (default test)");
  evaluate->opt("--k", "k", "evaluation cutoffs, comma separated");
  evaluate->opt("--policy", "policy", "exclude-train | all-items");
  evaluate->opt("--domain", "domain", "source | target (tdar checkpoints)");
  evaluate->opt("--seed", "seed", "seed recorded in the report");
  evaluate->opt("--model", "model", "model name recorded in the report");

  auto grid = std::make_shared<ArgSet>(app.add_subcommand(
      "grid", "lr/lambda grid search selected by validation F1@2"));
  grid->opt("--data", "data", "dataset bundle directory");
  grid->opt("--model", "model", "mf | tcf | wtcf | tmn");
  grid->opt("--out", "out", "output directory");
  grid->opt("--phase", "phase", "coarse | fine | both (default both)");
  grid->opt("--features", "features", "frozen textual features (tcf/wtcf)");
  grid->opt("--seed", "seed", "random seed (default 1)");
  grid->opt("--jobs", "jobs", "parallel trials (default: hardware threads)");
  grid->opt("--lr", "lr", "fine-phase center when running fine alone");
  grid->opt("--lambda", "lambda", "fine-phase center when running fine alone");
  grid->opt("--k2", "k2", "attention key width (tmn)");
  grid->opt("--k3", "k3", "embedding width (mf/tcf/wtcf)");
  grid->opt("--rho", "rho", "negatives per positive");
  grid->opt("--batch-size", "batch_size", "minibatch size");
  grid->opt("--max-iters", "max_iters", "epochs per trial");

  auto synth = std::make_shared<ArgSet>(app.add_subcommand(
      "synth", "generate a paired synthetic source/target scenario"));
  synth->opt("--out", "out", "output directory");
  synth->opt("--seed", "seed", "random seed (default 1)");
  synth->opt("--topics", "topics", "latent topic count");
  synth->opt("--users", "users_per_domain", "users per domain");
  synth->opt("--items", "items_per_domain", "items per domain");
  synth->opt("--words-per-topic", "words_per_topic", "topic vocabulary size");
  synth->opt("--common-words", "common_words", "shared vocabulary size");
  synth->opt("--k1", "k1", "word vector width");
  synth->opt("--density", "density", "interaction density before keep");
  synth->opt("--keep-fraction", "keep_fraction", "target-domain keep fraction");
  synth->opt("--affinity-same", "affinity_same", "same-topic propensity");
  synth->opt("--affinity-cross", "affinity_cross", "cross-topic propensity");

  auto mmd = std::make_shared<ArgSet>(app.add_subcommand(
      "mmd", "squared maximum mean discrepancy between two feature files"));
  mmd->opt("--a", "a", "first features file");
  mmd->opt("--b", "b", "second features file");
  mmd->opt("--side", "side", "user | item (default user)");
  mmd->opt("--bandwidth", "bandwidth", "RBF bandwidth (<=0: median heuristic)");
  mmd->opt("--out", "out", "optional report directory");
  mmd->opt("--seed", "seed", "seed recorded in the report");

  auto gradcheck = std::make_shared<ArgSet>(app.add_subcommand(
      "gradcheck", "finite-difference audit of every analytic gradient"));
  gradcheck->opt("--seed", "seed", "random seed (default 1)");
  gradcheck->opt("--out", "out", "optional report directory");
  gradcheck->flag("--inject-bug", "inject_bug",
                  "corrupt one analytic gradient to prove the audit notices");

  auto exportf = std::make_shared<ArgSet>(app.add_subcommand(
      "export-features", "write the frozen features of a tmn checkpoint"));
  exportf->opt("--checkpoint", "checkpoint", "tmn checkpoint");
  exportf->opt("--out", "out", "output features file");

  app.get_subcommand("prepare")->callback([&, prepare] { rc = run_prepare(*prepare); });
  app.get_subcommand("train")->callback([&, train] { rc = run_train(*train); });
  app.get_subcommand("train-tdar")->callback([&, tdar] { rc = run_train_tdar(*tdar); });
  app.get_subcommand("evaluate")->callback([&, evaluate] { rc = run_evaluate(*evaluate); });
  app.get_subcommand("grid")->callback([&, grid] { rc = run_grid(*grid); });
  app.get_subcommand("synth")->callback([&, synth] { rc = run_synth(*synth); });
  app.get_subcommand("mmd")->callback([&, mmd] { rc = run_mmd(*mmd); });
  app.get_subcommand("gradcheck")->callback([&, gradcheck] { rc = run_gradcheck(*gradcheck); });
  app.get_subcommand("export-features")->callback([&, exportf] { rc = run_export_features(*exportf); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
