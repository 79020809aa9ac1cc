#include <CLI11.hpp>
#include <fmt/core.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "idlink/config.hpp"
#include "idlink/error.hpp"
#include "idlink/harness.hpp"
#include "idlink/log.hpp"

namespace fs = std::filesystem;
using namespace idlink;

namespace {

struct Common {
  std::string config_path;
  std::string dataset;
  std::string edge_list;
  std::string seeds;
  int workers = 1;
  std::string out = "results";
  bool verbose = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool needs_data = true) {
  app->add_option("--config", c.config_path, "Experiment config file (key = value)");
  if (needs_data) {
    app->add_option("--dataset", c.dataset, "Dataset name from the manifest (overrides the config)");
    app->add_option("--edge-list", c.edge_list, "Load this edge list instead of a manifest dataset");
    app->add_option("--seeds", c.seeds, "Seed list, e.g. 1-10 or 1,4,7");
    app->add_option("--workers", c.workers, "Concurrent jobs")->check(CLI::PositiveNumber);
  }
  app->add_option("--out", c.out, "Output directory");
  app->add_flag("-v,--verbose", c.verbose, "Info-level logging");
  app->add_flag("-q,--quiet", c.quiet, "Only errors");
}

void apply_logging(const Common& c) {
  if (c.quiet) log_level() = LogLevel::silent;
  else if (c.verbose) log_level() = LogLevel::info;
}

ExperimentConfig make_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (!c.dataset.empty()) cfg.dataset = c.dataset;
  if (!c.edge_list.empty() && c.dataset.empty()) cfg.dataset = fs::path(c.edge_list).stem().string();
  if (!c.seeds.empty()) cfg.seeds = parse_seed_list(c.seeds);
  cfg.validate();
  return cfg;
}

Graph load_graph(const Common& c, const ExperimentConfig& cfg) {
  if (!c.edge_list.empty()) return load_edge_list(c.edge_list);
  return load_named_dataset(cfg.dataset);
}

void print_summary(const ExperimentResult& r) {
  fmt::print("{} on {}: hits@{} {:.2f}±{:.2f}  ap {:.2f}±{:.2f}  auc {:.2f}±{:.2f}  ({} seeds, {} failed)\n",
             r.config.method_name(), r.config.dataset, r.config.hits_k, 100 * r.hits.mean, 100 * r.hits.std,
             100 * r.ap.mean, 100 * r.ap.std, 100 * r.auc.mean, 100 * r.auc.std, r.runs.size(), r.failures());
}

int cmd_split(const Common& c) {
  const ExperimentConfig cfg = make_config(c);
  const Graph g = load_graph(c, cfg);
  for (Seed seed : cfg.seeds) {
    const EdgeSplit s = random_link_split(g, cfg.split, derive_seed(seed, "split"));
    const fs::path dir = fs::path(c.out) / cfg.dataset / fmt::format("split_{}", seed);
    fs::create_directories(dir);
    write_edge_list(dir / "train.txt", s.train_pos);
    write_edge_list(dir / "val.txt", s.val_pos);
    write_edge_list(dir / "test.txt", s.test_pos);
    fmt::print("seed {}: {} train, {} val, {} test edges -> {}\n", seed, s.train_pos.size(), s.val_pos.size(),
               s.test_pos.size(), dir.string());
  }
  return 0;
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = make_config(c);
  const Graph g = load_graph(c, cfg);
  const ExperimentResult r = run_experiment(cfg, g, RunOptions{c.workers, fs::path(c.out)});
  print_summary(r);
  fmt::print("outputs in {}\n", method_dir(c.out, cfg).string());
  return r.failures() ? 2 : 0;
}

int cmd_evaluate(const Common& c) {
  const ExperimentConfig cfg = make_config(c);
  const Graph g = load_graph(c, cfg);
  const fs::path dir = method_dir(c.out, cfg);
  ExperimentResult res;
  res.config = cfg;
  std::vector<double> hits, ap, auc;
  for (Seed seed : cfg.seeds) {
    SeedResult r;
    r.seed = seed;
    try {
      const fs::path sd = dir / std::to_string(seed);
      const EdgeSplit split = random_link_split(g, cfg.split, derive_seed(seed, "split"));
      LinkPredictor p;
      p.embeddings = ad::load_matrix(sd / "embeddings.txt");
      auto dec = std::make_shared<Decoder>(p.embeddings.cols(), cfg.train.decoder_hidden, 0);
      ad::load_parameters(sd / "decoder.txt", dec->parameters());
      p.decoder = dec;
      r.test = evaluate_split([&p](std::span<const Edge> e) { return p.logits(e); }, split, cfg.hits_k,
                              derive_seed(seed, "eval"));
      r.ok = true;
      hits.push_back(r.test.hits);
      ap.push_back(r.test.ap);
      auc.push_back(r.test.auc);
    } catch (const std::exception& e) {
      r.error = e.what();
      log_warn("seed {}: {}", seed, r.error);
    }
    res.runs.push_back(r);
  }
  res.hits = summarize(hits);
  res.ap = summarize(ap);
  res.auc = summarize(auc);
  std::cout << metrics_csv(res);
  return res.failures() ? 2 : 0;
}

struct SearchArgs {
  int trials = 25;
  int max_epochs = 3000;
  Seed tuning_seed = 0;
};

SearchSpace make_space(const SearchArgs& a) {
  SearchSpace space;
  space.budget = a.trials;
  std::erase_if(space.ct_epochs, [&](int e) { return e > a.max_epochs; });
  if (space.ct_epochs.empty()) throw std::invalid_argument("--max-epochs excludes every epoch choice");
  return space;
}

ExperimentConfig tune(const Common& c, const SearchArgs& a, const ExperimentConfig& base, const Graph& g) {
  const SearchResult r = random_search(make_space(a), base, validation_objective(g, a.tuning_seed), a.tuning_seed, c.workers);
  const fs::path dir = method_dir(c.out, base) / "search";
  fs::create_directories(dir);
  write_trial_log(dir / "trials.csv", r);
  save_config(dir / "best.cfg", r.best);
  fmt::print("{} on {}: best trial {} with validation hits@{} {:.4f} ({} of {} trials succeeded)\n", base.method_name(),
             base.dataset, r.best_index, base.hits_k, r.best_score,
             std::count_if(r.trials.begin(), r.trials.end(), [](const Trial& t) { return t.ok; }), r.trials.size());
  return r.best;
}

int cmd_search(const Common& c, const SearchArgs& a) {
  const ExperimentConfig cfg = make_config(c);
  const Graph g = load_graph(c, cfg);
  tune(c, a, cfg, g);
  fmt::print("best config in {}\n", (method_dir(c.out, cfg) / "search" / "best.cfg").string());
  return 0;
}

struct BenchmarkArgs {
  std::vector<std::string> models{"gcn_supervised", "grace", "bgrl", "lgrace", "lbgrl"};
  std::vector<std::string> augmentations{"random", "deg", "evc", "pr", "scom", "sbm", "sbm2"};
  std::vector<std::string> datasets;
  bool search = false;
  double alpha = 0.05;
};

int cmd_benchmark(const Common& c, const BenchmarkArgs& b, const SearchArgs& a) {
  const ExperimentConfig base = make_config(c);
  std::vector<std::string> datasets = b.datasets;
  if (datasets.empty()) datasets.push_back(base.dataset);
  ResultTable table;
  int failures = 0;
  for (const std::string& ds : datasets) {
    Common dc = c;
    dc.dataset = ds;
    ExperimentConfig cfg = base;
    cfg.dataset = ds;
    const Graph g = load_graph(dc, cfg);
    for (const std::string& model : b.models) {
      cfg.model = parse_model(model);
      const std::vector<std::string> augs =
          cfg.model == ModelKind::gcn_supervised ? std::vector<std::string>{"random"} : b.augmentations;
      for (const std::string& aug : augs) {
        cfg.augmentation.kind = parse_augmentation(aug);
        ExperimentConfig run_cfg = b.search ? tune(c, a, cfg, g) : cfg;
        run_cfg.seeds = base.seeds;
        const ExperimentResult r = run_experiment(run_cfg, g, RunOptions{c.workers, fs::path(c.out)});
        print_summary(r);
        failures += static_cast<int>(r.failures());
        add_result(table, r);
      }
    }
  }
  annotate(table, b.alpha);
  add_optim_rows(table);
  const std::string text = render_text(table);
  std::cout << text;
  std::ofstream(fs::path(c.out) / "report.txt") << text;
  std::ofstream(fs::path(c.out) / "report.csv") << render_csv(table);
  return failures ? 2 : 0;
}

struct ReportArgs {
  std::string results = "results";
  std::string metric = "hits";
  std::string format = "text";
  double alpha = 0.05;
  bool two_sided = false;
  bool optim = true;
};

int cmd_report(const ReportArgs& r) {
  ResultTable t = load_results(r.results, parse_metric(r.metric));
  annotate(t, r.alpha, r.two_sided ? CriticalSide::two_sided : CriticalSide::one_sided);
  if (r.optim) add_optim_rows(t);
  std::cout << (r.format == "csv" ? render_csv(t) : render_text(t));
  return 0;
}

int cmd_stats(const ReportArgs& r) {
  const ResultTable t = load_results(r.results, parse_metric(r.metric));
  std::cout << render_stats(t, r.alpha, r.two_sided ? CriticalSide::two_sided : CriticalSide::one_sided);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance-discrimination link prediction experiments"};
  app.require_subcommand(1);
  Common common;
  SearchArgs search_args;
  BenchmarkArgs bench_args;
  ReportArgs report_args;

  auto* split = app.add_subcommand("split", "Write the train/val/test edge split of every seed");
  add_common(split, common);
  auto* train = app.add_subcommand("train", "Train and evaluate one configuration over its seeds");
  add_common(train, common);
  auto* evaluate = app.add_subcommand("evaluate", "Re-evaluate saved checkpoints on their test splits");
  add_common(evaluate, common);
  auto* search = app.add_subcommand("search", "Random hyperparameter search on the validation split");
  add_common(search, common);
  for (auto* sub : {search, app.add_subcommand("benchmark", "Model x augmentation x dataset sweep")}) {
    if (sub != search) add_common(sub, common);
    sub->add_option("--trials", search_args.trials, "Search budget")->check(CLI::PositiveNumber);
    sub->add_option("--max-epochs", search_args.max_epochs, "Drop encoder epoch choices above this");
    sub->add_option("--tuning-seed", search_args.tuning_seed, "Seed whose validation split scores trials");
  }
  auto* benchmark = app.get_subcommand("benchmark");
  benchmark->add_option("--models", bench_args.models, "Models to run");
  benchmark->add_option("--augmentations", bench_args.augmentations, "Augmentations to run");
  benchmark->add_option("--datasets", bench_args.datasets, "Datasets (default: the config's)");
  benchmark->add_flag("--search", bench_args.search, "Tune every configuration before running it");
  benchmark->add_option("--alpha", bench_args.alpha, "Significance level");

  auto* stats = app.add_subcommand("stats", "Friedman and Bonferroni-Dunn over a results directory");
  auto* report = app.add_subcommand("report", "Render a results directory as a table");
  for (auto* sub : {stats, report}) {
    sub->add_option("--results", report_args.results, "Results directory")->check(CLI::ExistingDirectory);
    sub->add_option("--metric", report_args.metric, "hits, ap or auc");
    sub->add_option("--alpha", report_args.alpha, "Significance level");
    sub->add_flag("--two-sided", report_args.two_sided, "Two-sided Bonferroni critical value");
    sub->add_flag("-v,--verbose", common.verbose, "Info-level logging");
  }
  report->add_option("--format", report_args.format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
  report->add_flag("!--no-optim", report_args.optim, "Omit the per-model optim rows");

  CLI11_PARSE(app, argc, argv);
  apply_logging(common);

  try {
    if (split->parsed()) return cmd_split(common);
    if (train->parsed()) return cmd_train(common);
    if (evaluate->parsed()) return cmd_evaluate(common);
    if (search->parsed()) return cmd_search(common, search_args);
    if (benchmark->parsed()) return cmd_benchmark(common, bench_args, search_args);
    if (stats->parsed()) return cmd_stats(report_args);
    if (report->parsed()) return cmd_report(report_args);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
