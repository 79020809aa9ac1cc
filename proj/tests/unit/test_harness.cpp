#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "idlink/config.hpp"
#include "idlink/error.hpp"
#include "idlink/harness.hpp"
#include "idlink/log.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace idlink;
using idlink::testing::barbell;
using idlink::testing::random_graph;

namespace {

ExperimentConfig tiny_config(ModelKind model, AugmentationKind aug) {
  ExperimentConfig c;
  c.dataset = "toy";
  c.model = model;
  c.augmentation.kind = aug;
  c.train.encoder.layer_size = 8;
  c.train.proj_hidden = 8;
  c.train.decoder_hidden = 8;
  c.train.ct_epochs = 3;
  c.train.decoder_epochs = 3;
  c.hits_k = 5;
  c.seeds = {1, 2, 3};
  return c;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "idlink_unit" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct QuietLog {
  LogLevel saved = log_level().load();
  QuietLog() { log_level() = LogLevel::silent; }
  ~QuietLog() { log_level() = saved; }
};

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config round-trips through the text format") {
    ExperimentConfig c = tiny_config(ModelKind::lbgrl, AugmentationKind::sbm2_oracle);
    c.train.gnn_lr = 0.000123456789012345;
    c.train.weight_decay = 3.3e-6;
    c.train.encoder.norm = NormKind::layer;
    c.train.encoder.weight_standardization = true;
    c.train.link_loss.anchor = LinkAnchor::negative;
    c.augmentation.drop_feature_rate_2 = 0.7;
    c.split = {0.85, 0.05, 0.1};
    c.seeds = {4, 5, 9, 12};
    c.partition_file = "parts/leiden.txt";
    CHECK(parse_config(serialize_config(c)) == c);
    CHECK(parse_config(serialize_config(ExperimentConfig{})) == ExperimentConfig{});

    Rng rng = make_rng(3);
    for (int i = 0; i < 200; ++i) {
      const ExperimentConfig s = sample_config(SearchSpace{}, c, rng);
      CHECK(parse_config(serialize_config(s)) == s);
    }
  }

  TEST_CASE("config parsing errors") {
    CHECK_THROWS_AS(parse_config("no_such_key = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("tau = fast\n"), ParseError);
    CHECK_THROWS_AS(parse_config("model = gat\n"), ParseError);
    CHECK_THROWS_AS(parse_config("tau\n"), ParseError);
    const ExperimentConfig c = parse_config("# comment\nmodel = lgrace\n\ntau = 0.3\nseeds = 1-3,7\n");
    CHECK(c.model == ModelKind::lgrace);
    CHECK(c.train.tau == 0.3);
    CHECK(c.seeds == std::vector<Seed>{1, 2, 3, 7});
    CHECK(c.train.batch_size == TrainConfig{}.batch_size);
  }

  TEST_CASE("seed lists") {
    CHECK(parse_seed_list("1-10") == std::vector<Seed>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(parse_seed_list("0, 5,2") == std::vector<Seed>{0, 5, 2});
    CHECK_THROWS(parse_seed_list("3-1"));
    CHECK_THROWS(parse_seed_list("a"));
  }

  TEST_CASE("config validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(c.validate_search_space());
    c.train.tau = 0.0;
    CHECK_THROWS(c.validate());
    c = {};
    c.train.batch_size = 100;
    CHECK_NOTHROW(c.validate());
    CHECK_THROWS(c.validate_search_space());
    c = {};
    c.split = {0.5, 0.1, 0.1};
    CHECK_THROWS(c.validate());
    CHECK(tiny_config(ModelKind::gcn_supervised, AugmentationKind::sbm).method_name() == "gcn_supervised");
    CHECK(tiny_config(ModelKind::grace, AugmentationKind::pr).method_name() == "grace_pr");
  }

  TEST_CASE("seed lineage is hierarchical") {
    const auto a = seed_lineage(1);
    const auto b = seed_lineage(2);
    REQUIRE(a.size() == b.size());
    std::set<Seed> distinct;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second != b[i].second);
      distinct.insert(a[i].second);
    }
    CHECK(distinct.size() == a.size());
    CHECK(seed_lineage(1) == a);
  }

  TEST_CASE("summary uses the population standard deviation") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const MetricSummary s = summarize(v);
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
    CHECK(s.n == 4);
  }

  TEST_CASE("parallel_for runs every job and rethrows failures") {
    std::vector<int> hit(50, 0);
    parallel_for(50, 4, [&](std::size_t i) { hit[i] += 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 50);
    std::atomic<int> done{0};
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [&](std::size_t i) {
                                   ++done;
                                   if (i == 4) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    CHECK(done == 10);
  }

  TEST_CASE("experiments produce one row per seed plus aggregates and are reproducible") {
    QuietLog quiet;
    const Graph g = random_graph(40, 0.2, 6);
    const ExperimentConfig cfg = tiny_config(ModelKind::grace, AugmentationKind::random);
    const fs::path out1 = fresh_dir("exp1"), out2 = fresh_dir("exp2");
    const ExperimentResult r1 = run_experiment(cfg, g, {.workers = 2, .out_dir = out1});
    const ExperimentResult r2 = run_experiment(cfg, g, {.workers = 1, .out_dir = out2});
    CHECK(r1.failures() == 0);
    CHECK(r1.runs.size() == 3);
    const std::string csv = metrics_csv(r1);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 + 2);
    CHECK(csv == metrics_csv(r2));
    const fs::path dir = method_dir(out1, cfg);
    CHECK(read_file(dir / "results.csv") == read_file(method_dir(out2, cfg) / "results.csv"));
    for (Seed s : cfg.seeds) {
      const fs::path sd = dir / std::to_string(s);
      for (const char* f : {"metrics.csv", "config.txt", "loss.csv", "seeds.txt", "encoder.txt", "decoder.txt",
                            "embeddings.txt"})
        CHECK(fs::exists(sd / f));
      CHECK(load_config(sd / "config.txt") == cfg);
    }
  }

  TEST_CASE("every model and augmentation runs end to end") {
    QuietLog quiet;
    const Graph g = random_graph(40, 0.2, 8);
    for (ModelKind m : {ModelKind::gcn_supervised, ModelKind::grace, ModelKind::bgrl, ModelKind::lgrace, ModelKind::lbgrl})
      for (AugmentationKind a : {AugmentationKind::random, AugmentationKind::deg, AugmentationKind::evc,
                                 AugmentationKind::pr, AugmentationKind::scom, AugmentationKind::sbm,
                                 AugmentationKind::sbm2, AugmentationKind::sbm_oracle}) {
        if (m == ModelKind::gcn_supervised && a != AugmentationKind::random) continue;
        ExperimentConfig cfg = tiny_config(m, a);
        cfg.seeds = {1};
        const SeedResult r = run_seed(cfg, g, 1);
        INFO(cfg.method_name() << ": " << r.error);
        CHECK(r.ok);
        CHECK(r.test.auc >= 0.0);
      }
  }

  TEST_CASE("oracle block states are detected on the full graph") {
    QuietLog quiet;
    const Graph g = random_graph(40, 0.2, 9);
    ExperimentConfig cfg = tiny_config(ModelKind::grace, AugmentationKind::sbm_oracle);
    const SeedResult oracle = run_seed(cfg, g, 1);
    CHECK(oracle.detector_input_edges == g.num_edges());
    cfg.augmentation.kind = AugmentationKind::sbm;
    const SeedResult plain = run_seed(cfg, g, 1);
    CHECK(plain.detector_input_edges == random_link_split(g, cfg.split, derive_seed(1, "split")).train_pos.size());
    cfg.augmentation.kind = AugmentationKind::random;
    CHECK(run_seed(cfg, g, 1).detector_input_edges == 0);
  }

  TEST_CASE("failing seeds are recorded and the run continues") {
    QuietLog quiet;
    ExperimentConfig cfg = tiny_config(ModelKind::grace, AugmentationKind::random);
    cfg.hits_k = 1000;  // more than the sampled negatives
    const ExperimentResult r = run_experiment(cfg, random_graph(30, 0.2, 1));
    CHECK(r.failures() == 3);
    CHECK_FALSE(r.runs[0].error.empty());
    const std::string csv = metrics_csv(r);
    CHECK(csv.find("toy,grace,random,1,,,") != std::string::npos);
  }

  TEST_CASE("random search contracts") {
    const ExperimentConfig base = tiny_config(ModelKind::grace, AugmentationKind::deg);
    SearchSpace space;
    space.budget = 1;
    const SearchResult one = random_search(space, base, [](const ExperimentConfig&) { return 0.3; }, 5);
    CHECK(one.trials.size() == 1);
    CHECK(one.best == one.trials[0].config);

    space.budget = 25;
    const SearchResult rigged = random_search(space, base, [](const ExperimentConfig& c) { return c.train.tau; }, 7, 3);
    double max_tau = 0;
    for (const Trial& t : rigged.trials) max_tau = std::max(max_tau, t.config.train.tau);
    CHECK(rigged.best.train.tau == max_tau);
    CHECK(rigged.best_score == max_tau);
    const SearchResult again = random_search(space, base, [](const ExperimentConfig& c) { return c.train.tau; }, 7, 1);
    CHECK(again.best == rigged.best);
    CHECK(again.best_index == rigged.best_index);

    CHECK_THROWS_AS(random_search(space, base, [](const ExperimentConfig&) -> double { throw std::runtime_error("x"); }, 1),
                    std::runtime_error);

    const fs::path log = fresh_dir("search") / "trials.csv";
    write_trial_log(log, rigged);
    const std::string text = read_file(log);
    CHECK(std::count(text.begin(), text.end(), '\n') == 26);
  }

  TEST_CASE("sampled configs stay inside the search space") {
    const SearchSpace space;
    const ExperimentConfig base = tiny_config(ModelKind::lgrace, AugmentationKind::scom);
    Rng rng = make_rng(1);
    std::set<int> epochs, layers;
    for (int i = 0; i < 10000; ++i) {
      const ExperimentConfig c = sample_config(space, base, rng);
      REQUIRE_NOTHROW(c.validate_search_space());
      const TrainConfig& t = c.train;
      REQUIRE((t.batch_size - 256) % 64 == 0);
      REQUIRE((t.proj_hidden % 64 == 0 && t.encoder.layer_size % 64 == 0));
      REQUIRE(t.gnn_lr >= 1e-4);
      REQUIRE(t.gnn_lr <= 1e-2);
      REQUIRE(t.weight_decay >= 1e-6);
      REQUIRE(t.weight_decay <= 1e-4);
      REQUIRE(t.tau >= 0.1 - 1e-12);
      REQUIRE(t.tau <= 0.9 + 1e-12);
      REQUIRE(c.augmentation.drop_edge_rate_1 <= 0.9 + 1e-12);
      REQUIRE(c.model == base.model);
      REQUIRE(c.augmentation.kind == base.augmentation.kind);
      epochs.insert(t.ct_epochs);
      layers.insert(t.encoder.n_layers);
    }
    CHECK(epochs == std::set<int>{100, 500, 1500, 3000});
    CHECK(layers == std::set<int>{1, 2, 3, 4});
  }

  TEST_CASE("report tables") {
    ResultTable t;
    t.datasets = {"A", "B"};
    auto add = [&](const std::string& model, const std::string& aug, const std::string& ds, double base) {
      ResultRow* row = nullptr;
      for (auto& r : t.rows)
        if (r.model == model && r.augmentation == aug) row = &r;
      if (!row) row = &t.rows.emplace_back(ResultRow{model, aug, {}, false, {}});
      ResultCell& c = row->cells[ds];
      for (Seed s = 1; s <= 10; ++s) {
        c.seeds.push_back(s);
        c.values.push_back(base + 0.001 * static_cast<double>(s));
      }
    };
    add("grace", "random", "A", 0.5);
    annotate(t, 0.05);
    CHECK(t.rows[0].marks.empty());

    add("grace", "deg", "A", 0.9);
    add("grace", "sbm", "A", 0.1);
    add("grace", "random", "B", 0.3);
    add("grace", "deg", "B", 0.2);
    add("grace", "sbm", "B", 0.6);
    annotate(t, 0.05);
    CHECK(t.rows[1].marks.at("A") == "*");
    CHECK(t.rows[2].marks.at("A") == "X");
    CHECK(t.rows[2].marks.at("B") == "*");
    CHECK(t.rows[1].marks.at("B") == "X");

    add_optim_rows(t);
    const ResultRow& optim = t.rows.back();
    CHECK(optim.derived);
    CHECK(optim.cells.at("A").mean() == t.rows[1].cells.at("A").mean());
    CHECK(optim.cells.at("B").mean() == t.rows[2].cells.at("B").mean());

    const std::string text = render_text(t);
    const std::string csv = render_csv(t);
    for (const ResultRow& r : t.rows)
      for (const auto& [ds, cell] : r.cells) {
        const std::string mean = fmt::format("{:.2f}", 100 * cell.mean());
        const std::string sd = fmt::format("{:.2f}", 100 * cell.std());
        CHECK(text.find(mean + "±" + sd) != std::string::npos);
        CHECK(csv.find("," + ds + "," + mean + "," + sd + ",") != std::string::npos);
      }
    CHECK(render_stats(t, 0.05).find("A") != std::string::npos);
  }

  TEST_CASE("results directories load back into tables") {
    QuietLog quiet;
    const Graph g = random_graph(40, 0.2, 6);
    const fs::path out = fresh_dir("results");
    ResultTable direct;
    for (AugmentationKind a : {AugmentationKind::random, AugmentationKind::pr}) {
      const ExperimentResult r = run_experiment(tiny_config(ModelKind::grace, a), g, {.out_dir = out});
      add_result(direct, r);
    }
    const ResultTable loaded = load_results(out);
    REQUIRE(loaded.rows.size() == 2);
    CHECK(loaded.datasets == std::vector<std::string>{"toy"});
    auto body_lines = [](const std::string& csv) {
      std::vector<std::string> lines;
      std::istringstream in(csv);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) lines.push_back(line);
      std::sort(lines.begin(), lines.end());
      return lines;
    };
    CHECK(body_lines(render_csv(loaded)) == body_lines(render_csv(direct)));
  }
}
