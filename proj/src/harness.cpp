#include "idlink/harness.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "idlink/community.hpp"
#include "idlink/error.hpp"
#include "idlink/log.hpp"
#include "idlink/models.hpp"

#ifndef IDLINK_SOURCE_MANIFEST
#define IDLINK_SOURCE_MANIFEST "data/datasets.json"
#endif

namespace idlink {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

fs::path default_manifest_path() {
  if (const char* env = std::getenv("IDLINK_MANIFEST"); env && *env) return env;
  const fs::path in_root = dataset_root() / "datasets.json";
  if (fs::exists(in_root)) return in_root;
  return IDLINK_SOURCE_MANIFEST;
}

Graph load_named_dataset(const std::string& name) {
  const std::vector<DatasetInfo> manifest = load_manifest(default_manifest_path());
  return load_dataset(find_dataset(manifest, name), dataset_root());
}

std::vector<std::pair<std::string, Seed>> seed_lineage(Seed run_seed) {
  std::vector<std::pair<std::string, Seed>> out;
  for (const char* tag : {"split", "detect", "encoder", "decoder", "train", "eval", "eval_val"})
    out.emplace_back(tag, derive_seed(run_seed, tag));
  return out;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

std::size_t ExperimentResult::failures() const {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const SeedResult& r) { return !r.ok; }));
}

namespace {

std::string augmentation_label(const ExperimentConfig& cfg) {
  return cfg.model == ModelKind::gcn_supervised ? "none" : std::string(to_string(cfg.augmentation.kind));
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_header(int k) { return fmt::format("dataset,model,augmentation,seed,hits_at_{},ap,auc\n", k); }

std::string csv_row(const ExperimentConfig& cfg, const std::string& seed, const std::optional<SplitMetrics>& m) {
  std::string row = fmt::format("{},{},{},{}", csv_field(cfg.dataset), to_string(cfg.model), augmentation_label(cfg), seed);
  if (m) return row + fmt::format(",{},{},{}\n", num(m->hits), num(m->ap), num(m->auc));
  return row + ",,,\n";
}

void write_seed_outputs(const fs::path& dir, const ExperimentConfig& cfg, Seed seed, const SeedResult& r,
                        const std::vector<std::pair<int, double>>& losses) {
  fs::create_directories(dir);
  save_config(dir / "config.txt", cfg);
  write_text(dir / "metrics.csv", csv_header(cfg.hits_k) + csv_row(cfg, std::to_string(seed), r.test));
  std::string loss = "epoch,loss\n";
  for (const auto& [e, l] : losses) loss += fmt::format("{},{}\n", e, num(l));
  write_text(dir / "loss.csv", loss);
  std::string lineage;
  for (const auto& [tag, s] : seed_lineage(seed)) lineage += fmt::format("{} {}\n", tag, s);
  write_text(dir / "seeds.txt", lineage);
}

}  // namespace

fs::path method_dir(const fs::path& root, const ExperimentConfig& cfg) {
  return root / cfg.dataset / cfg.method_name();
}

SeedResult run_seed(const ExperimentConfig& cfg, const Graph& g, Seed seed, const SeedOptions& opts) {
  SeedResult r;
  r.seed = seed;
  try {
    cfg.validate();
    for (const auto& [tag, s] : seed_lineage(seed)) log_debug("seed {} -> {} {}", seed, tag, s);
    const EdgeSplit split = random_link_split(g, cfg.split, derive_seed(seed, "split"));

    std::optional<BlockState> blocks;
    if (cfg.model != ModelKind::gcn_supervised && needs_block_state(cfg.augmentation.kind)) {
      const Graph& input = is_oracle(cfg.augmentation.kind) ? g : split.train_graph;
      const auto detector = make_detector(cfg.augmentation.detector, cfg.partition_file);
      log_info("seed {}: {} community detection on {} nodes, {} edges", seed, detector->name(), input.num_nodes(),
               input.num_edges());
      blocks = detector->detect(input, derive_seed(seed, "detect"));
      r.detector_input_edges = input.num_edges();
    }

    LinkPredictor predictor;
    std::vector<std::pair<int, double>> losses;
    std::vector<const Parameter*> encoder_params;
    SupervisedModel supervised;
    TrainState state;
    if (cfg.model == ModelKind::gcn_supervised) {
      supervised = train_supervised_gcn(split, cfg.train, derive_seed(seed, "train"));
      predictor.embeddings = supervised.encoder->embed(split.train_graph);
      predictor.decoder = std::shared_ptr<const Decoder>(std::move(supervised.decoder));
      losses = supervised.loss_history;
      encoder_params = std::as_const(*supervised.encoder).parameters();
    } else {
      state = train_encoder(split, cfg.augmentation, blocks, cfg.model, cfg.train, derive_seed(seed, "encoder"));
      r.skipped_epochs = state.skipped_epochs;
      predictor.decoder = std::make_shared<const Decoder>(train_decoder(state, split, cfg.train, derive_seed(seed, "decoder")));
      predictor.embeddings = state.embed(split.train_graph);
      losses = state.loss_history;
      encoder_params = std::as_const(*state.online).parameters();
    }

    const LinkScorer scorer = [&predictor](std::span<const Edge> pairs) { return predictor.logits(pairs); };
    if (opts.evaluate_validation)
      r.val = evaluate_pairs(scorer, split, split.val_pos, cfg.hits_k, derive_seed(seed, "eval_val"));
    if (opts.evaluate_test) r.test = evaluate_split(scorer, split, cfg.hits_k, derive_seed(seed, "eval"));
    r.ok = true;

    if (opts.out_dir) {
      write_seed_outputs(*opts.out_dir, cfg, seed, r, losses);
      ad::save_parameters(*opts.out_dir / "encoder.txt", encoder_params);
      ad::save_parameters(*opts.out_dir / "decoder.txt", predictor.decoder->parameters());
      ad::save_matrix(*opts.out_dir / "embeddings.txt", predictor.embeddings);
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    log_warn("{} on {} seed {} failed: {}", cfg.method_name(), cfg.dataset, seed, r.error);
  }
  return r;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Graph& g, const RunOptions& opts) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  res.runs.resize(cfg.seeds.size());
  const std::optional<fs::path> dir = opts.out_dir ? std::optional(method_dir(*opts.out_dir, cfg)) : std::nullopt;
  parallel_for(cfg.seeds.size(), opts.workers, [&](std::size_t i) {
    SeedOptions so;
    if (dir) so.out_dir = *dir / std::to_string(cfg.seeds[i]);
    res.runs[i] = run_seed(cfg, g, cfg.seeds[i], so);
  });
  std::vector<double> hits, ap, auc;
  for (const SeedResult& r : res.runs) {
    if (!r.ok) continue;
    hits.push_back(r.test.hits);
    ap.push_back(r.test.ap);
    auc.push_back(r.test.auc);
  }
  res.hits = summarize(hits);
  res.ap = summarize(ap);
  res.auc = summarize(auc);
  if (dir) {
    fs::create_directories(*dir);
    save_config(*dir / "config.txt", cfg);
    write_text(*dir / "results.csv", metrics_csv(res));
  }
  return res;
}

std::string metrics_csv(const ExperimentResult& r) {
  std::string out = csv_header(r.config.hits_k);
  for (const SeedResult& s : r.runs)
    out += csv_row(r.config, std::to_string(s.seed), s.ok ? std::optional(s.test) : std::nullopt);
  out += csv_row(r.config, "mean", SplitMetrics{r.hits.mean, r.ap.mean, r.auc.mean});
  out += csv_row(r.config, "std", SplitMetrics{r.hits.std, r.ap.std, r.auc.std});
  return out;
}

// ---------------------------------------------------------------------------
// Search

namespace {

int grid_int(Rng& rng, int lo, int hi, int step) {
  const auto k = uniform_index(rng, static_cast<std::uint64_t>((hi - lo) / step) + 1);
  return lo + static_cast<int>(k) * step;
}

double grid_double(Rng& rng, double lo, double hi, double step) {
  const auto steps = static_cast<std::uint64_t>(std::llround((hi - lo) / step));
  const double v = lo + static_cast<double>(uniform_index(rng, steps + 1)) * step;
  return std::round(v * 1e9) / 1e9;
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(std::log(lo) + uniform01(rng) * (std::log(hi) - std::log(lo)));
}

bool coin(Rng& rng) { return uniform_index(rng, 2) == 1; }

}  // namespace

ExperimentConfig sample_config(const SearchSpace& s, const ExperimentConfig& base, Rng& rng) {
  if (s.ct_epochs.empty() || s.detectors.empty()) throw std::invalid_argument("search space has an empty choice list");
  ExperimentConfig c = base;
  TrainConfig& t = c.train;
  t.ct_epochs = s.ct_epochs[uniform_index(rng, s.ct_epochs.size())];
  t.batch_size = grid_int(rng, s.batch_min, s.batch_max, s.batch_step);
  t.gnn_lr = log_uniform(rng, s.lr_min, s.lr_max);
  t.proj_hidden = grid_int(rng, s.proj_min, s.proj_max, s.proj_step);
  t.loss_func = coin(rng) ? DecoderLoss::bce : DecoderLoss::log_sig;
  t.pred_lr = log_uniform(rng, s.lr_min, s.lr_max);
  t.mask_input = coin(rng);
  t.weight_decay = log_uniform(rng, s.wd_min, s.wd_max);
  t.encoder.n_layers = grid_int(rng, s.layers_min, s.layers_max, 1);
  t.encoder.layer_size = grid_int(rng, s.size_min, s.size_max, s.size_step);
  t.encoder.norm = coin(rng) ? NormKind::batch : NormKind::layer;
  t.encoder.batchnorm_momentum = grid_double(rng, s.mm_min, s.mm_max, s.mm_step);
  t.encoder.weight_standardization = coin(rng);
  t.tau = grid_double(rng, s.tau_min, s.tau_max, s.tau_step);
  AugmentationSpec& a = c.augmentation;
  a.drop_edge_rate_1 = grid_double(rng, s.rate_min, s.rate_max, s.rate_step);
  a.drop_edge_rate_2 = grid_double(rng, s.rate_min, s.rate_max, s.rate_step);
  a.drop_feature_rate_1 = grid_double(rng, s.rate_min, s.rate_max, s.rate_step);
  a.drop_feature_rate_2 = grid_double(rng, s.rate_min, s.rate_max, s.rate_step);
  a.detector = s.detectors[uniform_index(rng, s.detectors.size())];
  return c;
}

SearchResult random_search(const SearchSpace& space, const ExperimentConfig& base, const Objective& objective,
                           Seed seed, int workers) {
  if (space.budget < 1) throw std::invalid_argument("search budget must be at least 1");
  SearchResult res;
  Rng rng = make_rng(derive_seed(seed, "search"));
  for (int i = 0; i < space.budget; ++i) res.trials.push_back(Trial{i, sample_config(space, base, rng), 0.0, false, {}});
  parallel_for(res.trials.size(), workers, [&](std::size_t i) {
    Trial& t = res.trials[i];
    try {
      t.score = objective(t.config);
      t.ok = std::isfinite(t.score);
      if (!t.ok) t.error = "objective is not finite";
    } catch (const std::exception& e) {
      t.error = e.what();
    }
    log_info("trial {}: {}", t.index, t.ok ? fmt::format("score {:.4f}", t.score) : "failed: " + t.error);
  });
  for (const Trial& t : res.trials) {
    if (t.ok && (res.best_index < 0 || t.score > res.best_score)) {
      res.best_index = t.index;
      res.best_score = t.score;
      res.best = t.config;
    }
  }
  if (res.best_index < 0) throw std::runtime_error(fmt::format("all {} search trials failed", res.trials.size()));
  return res;
}

Objective validation_objective(const Graph& g, Seed tuning_seed) {
  return [g, tuning_seed](const ExperimentConfig& c) {
    SeedOptions o;
    o.evaluate_test = false;
    o.evaluate_validation = true;
    const SeedResult r = run_seed(c, g, tuning_seed, o);
    if (!r.ok) throw std::runtime_error(r.error);
    return r.val.hits;
  };
}

void write_trial_log(const fs::path& path, const SearchResult& r) {
  auto pairs = [](const ExperimentConfig& c) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::istringstream in(serialize_config(c));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return kv;
  };
  std::string out = "trial,score,ok,error";
  if (!r.trials.empty())
    for (const auto& [k, v] : pairs(r.trials.front().config)) out += "," + k;
  out += '\n';
  for (const Trial& t : r.trials) {
    out += fmt::format("{},{},{},{}", t.index, t.ok ? num(t.score) : "", t.ok ? "true" : "false", csv_field(t.error));
    for (const auto& [k, v] : pairs(t.config)) out += "," + csv_field(v);
    out += '\n';
  }
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// Result tables

Metric parse_metric(std::string_view s) {
  if (s == "hits" || s.starts_with("hits_at_")) return Metric::hits;
  if (s == "ap") return Metric::ap;
  if (s == "auc") return Metric::auc;
  throw std::invalid_argument(fmt::format("unknown metric '{}'", s));
}

double ResultCell::mean() const { return summarize(values).mean; }
double ResultCell::std() const { return summarize(values).std; }

namespace {

ResultRow& row_for(ResultTable& t, const std::string& model, const std::string& aug) {
  for (ResultRow& r : t.rows)
    if (!r.derived && r.model == model && r.augmentation == aug) return r;
  t.rows.push_back(ResultRow{model, aug, {}, false, {}});
  return t.rows.back();
}

void add_value(ResultTable& t, const std::string& dataset, const std::string& model, const std::string& aug, Seed seed,
               double value) {
  if (std::find(t.datasets.begin(), t.datasets.end(), dataset) == t.datasets.end()) t.datasets.push_back(dataset);
  ResultCell& cell = row_for(t, model, aug).cells[dataset];
  const auto it = std::lower_bound(cell.seeds.begin(), cell.seeds.end(), seed);
  const auto pos = it - cell.seeds.begin();
  if (it != cell.seeds.end() && *it == seed) {
    cell.values[pos] = value;
    return;
  }
  cell.seeds.insert(it, seed);
  cell.values.insert(cell.values.begin() + pos, value);
}

std::string row_aug(const std::string& model, const std::string& aug) { return model == "gcn_supervised" ? "" : aug; }

std::string metric_column(Metric m, int k) {
  switch (m) {
    case Metric::hits: return fmt::format("hits_at_{}", k);
    case Metric::ap: return "ap";
    case Metric::auc: return "auc";
  }
  return {};
}

bool is_adaptive(const std::string& aug) {
  return aug == "deg" || aug == "evc" || aug == "pr" || aug == "scom" || aug == "sbm" || aug == "sbm2";
}

std::string format_cell(const ResultCell& c) { return fmt::format("{:.2f}±{:.2f}", 100.0 * c.mean(), 100.0 * c.std()); }

std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width) { return s + std::string(width - std::min(width, display_width(s)), ' '); }

}  // namespace

ResultTable load_results(const fs::path& root, Metric metric) {
  if (!fs::is_directory(root)) throw std::runtime_error(fmt::format("results directory '{}' not found", root.string()));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  ResultTable t;
  bool named = false;
  for (const fs::path& f : files) {
    std::ifstream in(f);
    std::string line;
    if (!std::getline(in, line)) continue;
    const std::vector<std::string> header = split_csv_line(line);
    std::size_t col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
      const bool match = metric == Metric::hits ? header[i].starts_with("hits_at_") : header[i] == metric_column(metric, 0);
      if (match) col = i;
    }
    if (header.size() < 7 || col == header.size()) throw ParseError(fmt::format("'{}': unexpected header", f.string()));
    if (!named) {
      t.metric = header[col];
      named = true;
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> v = split_csv_line(line);
      if (v.size() != header.size()) throw ParseError(fmt::format("'{}': ragged row", f.string()));
      if (v[col].empty() || v[3] == "mean" || v[3] == "std") continue;
      try {
        add_value(t, v[0], v[1], row_aug(v[1], v[2]), std::stoull(v[3]), std::stod(v[col]));
      } catch (const std::logic_error&) {
        throw ParseError(fmt::format("'{}': malformed row '{}'", f.string(), line));
      }
    }
  }
  return t;
}

void add_result(ResultTable& t, const ExperimentResult& r, Metric metric) {
  const std::string model(to_string(r.config.model));
  const std::string aug = row_aug(model, augmentation_label(r.config));
  t.metric = metric_column(metric, r.config.hits_k);
  for (const SeedResult& s : r.runs) {
    if (!s.ok) continue;
    const double v = metric == Metric::hits ? s.test.hits : metric == Metric::ap ? s.test.ap : s.test.auc;
    add_value(t, r.config.dataset, model, aug, s.seed, v);
  }
}

namespace {

/// Rows that take part in the significance pass for one dataset, plus the common seeds.
std::pair<std::vector<std::size_t>, std::vector<Seed>> comparable(const ResultTable& t, const std::string& dataset) {
  std::vector<std::size_t> rows;
  std::vector<Seed> seeds;
  bool first = true;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto it = t.rows[i].cells.find(dataset);
    if (t.rows[i].derived || it == t.rows[i].cells.end()) continue;
    rows.push_back(i);
    if (first) {
      seeds = it->second.seeds;
      first = false;
    } else {
      std::vector<Seed> common;
      std::set_intersection(seeds.begin(), seeds.end(), it->second.seeds.begin(), it->second.seeds.end(),
                            std::back_inserter(common));
      seeds = std::move(common);
    }
  }
  return {rows, seeds};
}

Eigen::MatrixXd score_matrix(const ResultTable& t, const std::string& dataset, const std::vector<std::size_t>& rows,
                             const std::vector<Seed>& seeds) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(seeds.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const ResultCell& c = t.rows[rows[j]].cells.at(dataset);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto pos = std::lower_bound(c.seeds.begin(), c.seeds.end(), seeds[i]) - c.seeds.begin();
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.values[pos];
    }
  }
  return m;
}

}  // namespace

void annotate(ResultTable& t, double alpha, CriticalSide side) {
  for (ResultRow& r : t.rows) r.marks.clear();
  for (const std::string& ds : t.datasets) {
    const auto [rows, seeds] = comparable(t, ds);
    if (rows.size() < 2 || seeds.size() < 2) continue;
    const SignificanceGroups g = bonferroni_dunn_groups(score_matrix(t, ds, rows, seeds), alpha, side);
    for (int j : g.best) t.rows[rows[j]].marks[ds] += "*";
    for (int j : g.worst) t.rows[rows[j]].marks[ds] += "X";
  }
}

void add_optim_rows(ResultTable& t) {
  std::vector<std::string> models;
  for (const ResultRow& r : t.rows)
    if (!r.derived && r.model != "gcn_supervised" && std::find(models.begin(), models.end(), r.model) == models.end())
      models.push_back(r.model);
  for (const std::string& model : models) {
    ResultRow optim{model, "optim", {}, true, {}};
    for (const std::string& ds : t.datasets) {
      const ResultCell* best = nullptr;
      for (const ResultRow& r : t.rows) {
        if (r.derived || r.model != model || !is_adaptive(r.augmentation)) continue;
        const auto it = r.cells.find(ds);
        if (it != r.cells.end() && (!best || it->second.mean() > best->mean())) best = &it->second;
      }
      if (best) optim.cells[ds] = *best;
    }
    if (!optim.cells.empty()) t.rows.push_back(std::move(optim));
  }
}

std::string render_text(const ResultTable& t) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"method"});
  for (const std::string& ds : t.datasets) grid.back().push_back(ds);
  for (const ResultRow& r : t.rows) {
    std::vector<std::string> line{r.label()};
    for (const std::string& ds : t.datasets) {
      const auto it = r.cells.find(ds);
      if (it == r.cells.end()) {
        line.emplace_back("-");
        continue;
      }
      const auto mark = r.marks.find(ds);
      line.push_back(format_cell(it->second) + (mark != r.marks.end() ? " " + mark->second : ""));
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& line : grid)
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], display_width(line[j]));
  std::string out = fmt::format("metric: {}\n", t.metric);
  for (const auto& line : grid) {
    std::string s;
    for (std::size_t j = 0; j < line.size(); ++j) s += (j ? "  " : "") + pad(line[j], width[j]);
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out += s + '\n';
  }
  return out;
}

std::string render_csv(const ResultTable& t) {
  std::string out = fmt::format("method,model,augmentation,dataset,{}_mean,{}_std,n,mark\n", t.metric, t.metric);
  for (const ResultRow& r : t.rows) {
    for (const std::string& ds : t.datasets) {
      const auto it = r.cells.find(ds);
      if (it == r.cells.end()) continue;
      const auto mark = r.marks.find(ds);
      out += fmt::format("{},{},{},{},{:.2f},{:.2f},{},{}\n", csv_field(r.label()), r.model, r.augmentation, csv_field(ds),
                         100.0 * it->second.mean(), 100.0 * it->second.std(), it->second.values.size(),
                         mark != r.marks.end() ? mark->second : "");
    }
  }
  return out;
}

std::string render_stats(const ResultTable& t, double alpha, CriticalSide side) {
  std::string out;
  for (const std::string& ds : t.datasets) {
    const auto [rows, seeds] = comparable(t, ds);
    out += fmt::format("dataset {}: {} methods, {} common seeds\n", ds, rows.size(), seeds.size());
    if (rows.size() < 2 || seeds.size() < 2) {
      out += "  not enough data for a Friedman test\n";
      continue;
    }
    const SignificanceGroups g = bonferroni_dunn_groups(score_matrix(t, ds, rows, seeds), alpha, side);
    out += fmt::format("  friedman chi2 = {:.6f}, p = {:.6g}, critical difference = {:.6f}{}\n", g.friedman.chi_sq,
                       g.friedman.p_value, g.critical_difference, g.gate_passed ? "" : " (not significant)");
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const bool best = std::find(g.best.begin(), g.best.end(), static_cast<int>(j)) != g.best.end();
      const bool worst = std::find(g.worst.begin(), g.worst.end(), static_cast<int>(j)) != g.worst.end();
      out += fmt::format("  {:<24} mean rank {:.3f}{}{}\n", t.rows[rows[j]].label(), g.friedman.mean_ranks[j],
                         best ? "  best" : "", worst ? "  worst" : "");
    }
  }
  return out;
}

}  // namespace idlink
