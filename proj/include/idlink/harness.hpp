#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "idlink/config.hpp"
#include "idlink/eval.hpp"
#include "idlink/graph.hpp"

namespace idlink {

/// Runs job(0..n-1) on at most `workers` threads. The first exception is rethrown
/// after every started job has finished.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& job);

/// Manifest lookup: $IDLINK_MANIFEST, else <dataset root>/datasets.json, else the
/// manifest shipped with the sources.
std::filesystem::path default_manifest_path();
Graph load_named_dataset(const std::string& name);

/// Named sub-seeds of one run seed, in the order they are used.
std::vector<std::pair<std::string, Seed>> seed_lineage(Seed run_seed);

struct SeedResult {
  Seed seed = 0;
  bool ok = false;
  std::string error;
  SplitMetrics test;
  SplitMetrics val;
  /// Edges seen by community detection (0 when the run needed no block state).
  std::size_t detector_input_edges = 0;
  int skipped_epochs = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation
  std::size_t n = 0;
};

MetricSummary summarize(std::span<const double> values);

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<SeedResult> runs;
  MetricSummary hits, ap, auc;

  std::size_t failures() const;
};

struct SeedOptions {
  bool evaluate_test = true;
  bool evaluate_validation = false;
  /// When set, config snapshot, metrics, loss curve and checkpoints are written here.
  std::optional<std::filesystem::path> out_dir;
};

/// split -> (community detection) -> train -> evaluate for one seed. Failures are
/// captured in the result rather than thrown.
SeedResult run_seed(const ExperimentConfig& cfg, const Graph& g, Seed seed, const SeedOptions& opts = {});

struct RunOptions {
  int workers = 1;
  /// Results root; per-method output goes to <out>/<dataset>/<method>/.
  std::optional<std::filesystem::path> out_dir;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Graph& g, const RunOptions& opts = {});

/// One row per seed plus mean and std rows. Columns: dataset, model, augmentation, seed,
/// hits_at_<k>, ap, auc. Failed seeds are listed with empty metric cells.
std::string metrics_csv(const ExperimentResult& r);
std::filesystem::path method_dir(const std::filesystem::path& root, const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Hyperparameter search

struct SearchSpace {
  std::vector<int> ct_epochs{100, 500, 1500, 3000};
  int batch_min = 256, batch_max = 6400, batch_step = 64;
  double lr_min = 1e-4, lr_max = 1e-2;
  int proj_min = 64, proj_max = 512, proj_step = 64;
  double wd_min = 1e-6, wd_max = 1e-4;
  int layers_min = 1, layers_max = 4;
  int size_min = 64, size_max = 512, size_step = 64;
  double mm_min = 0.8, mm_max = 1.0, mm_step = 0.01;
  double tau_min = 0.1, tau_max = 0.9, tau_step = 0.1;
  double rate_min = 0.0, rate_max = 0.9, rate_step = 0.1;
  std::vector<std::string> detectors{"louvain"};
  int budget = 25;
};

/// Uniform draw of every tuned field (learning rates and weight decay log-uniformly);
/// dataset, model, augmentation kind, split and seeds come from `base`.
ExperimentConfig sample_config(const SearchSpace& space, const ExperimentConfig& base, Rng& rng);

struct Trial {
  int index = 0;
  ExperimentConfig config;
  double score = 0.0;
  bool ok = false;
  std::string error;
};

struct SearchResult {
  ExperimentConfig best;
  double best_score = 0.0;
  int best_index = -1;
  std::vector<Trial> trials;
};

using Objective = std::function<double(const ExperimentConfig&)>;

/// Evaluates `budget` sampled configs and returns the argmax (first on ties).
/// Throws std::runtime_error when every trial fails.
SearchResult random_search(const SearchSpace& space, const ExperimentConfig& base, const Objective& objective,
                           Seed seed, int workers = 1);

/// Validation Hits@k of one run on the split of `tuning_seed`.
Objective validation_objective(const Graph& g, Seed tuning_seed = 0);

/// CSV: trial, score, ok, error, then every config key.
void write_trial_log(const std::filesystem::path& path, const SearchResult& r);

// ---------------------------------------------------------------------------
// Result tables

enum class Metric { hits, ap, auc };
Metric parse_metric(std::string_view s);

struct ResultCell {
  std::vector<Seed> seeds;
  std::vector<double> values;  ///< aligned with seeds, ascending seed order

  double mean() const;
  double std() const;
};

struct ResultRow {
  std::string model;
  std::string augmentation;
  std::map<std::string, ResultCell> cells;  ///< by dataset
  bool derived = false;  ///< the per-model "optim" row
  std::map<std::string, std::string> marks;  ///< by dataset: "*" best group, "X" worst group

  std::string label() const { return augmentation.empty() ? model : model + " " + augmentation; }
};

struct ResultTable {
  std::vector<std::string> datasets;
  std::vector<ResultRow> rows;
  std::string metric = "hits_at_50";
};

/// Collects <root>/<dataset>/<method>/metrics.csv files.
ResultTable load_results(const std::filesystem::path& root, Metric metric = Metric::hits);
void add_result(ResultTable& t, const ExperimentResult& r, Metric metric = Metric::hits);

/// Per dataset, runs Friedman + Bonferroni-Dunn over the non-derived rows and sets marks.
void annotate(ResultTable& t, double alpha, CriticalSide side = CriticalSide::one_sided);
/// Appends per model a row holding, per dataset, the adaptive augmentation cell with the best mean.
void add_optim_rows(ResultTable& t);

/// Cells as mean±std in percent with two decimals, followed by the marks.
std::string render_text(const ResultTable& t);
std::string render_csv(const ResultTable& t);
/// Friedman statistic, p-value, critical difference and mean ranks per dataset.
std::string render_stats(const ResultTable& t, double alpha, CriticalSide side = CriticalSide::one_sided);

}  // namespace idlink
