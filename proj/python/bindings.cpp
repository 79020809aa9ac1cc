#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "idlink/augment.hpp"
#include "idlink/community.hpp"
#include "idlink/config.hpp"
#include "idlink/error.hpp"
#include "idlink/eval.hpp"
#include "idlink/graph.hpp"
#include "idlink/harness.hpp"
#include "idlink/log.hpp"
#include "idlink/sbm.hpp"

namespace py = pybind11;
using namespace idlink;

namespace {

using EdgeArray = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 2, Eigen::RowMajor>;

EdgeArray to_array(std::span<const Edge> edges) {
  EdgeArray a(static_cast<Eigen::Index>(edges.size()), 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    a(static_cast<Eigen::Index>(i), 0) = edges[i].u;
    a(static_cast<Eigen::Index>(i), 1) = edges[i].v;
  }
  return a;
}

std::vector<std::pair<NodeId, NodeId>> to_pairs(const EdgeArray& a) {
  std::vector<std::pair<NodeId, NodeId>> p;
  p.reserve(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) p.emplace_back(static_cast<NodeId>(a(i, 0)), static_cast<NodeId>(a(i, 1)));
  return p;
}

std::vector<Edge> to_edges(const EdgeArray& a) {
  std::vector<Edge> e;
  for (const auto& [u, v] : to_pairs(a)) e.push_back(make_edge(u, v));
  return e;
}

ScoreSet score_set(std::vector<double> y_pos, std::vector<double> y_neg) { return {std::move(y_pos), std::move(y_neg)}; }

py::dict metrics_dict(const SplitMetrics& m) { return py::dict(py::arg("hits") = m.hits, py::arg("ap") = m.ap, py::arg("auc") = m.auc); }

py::dict summary_dict(const MetricSummary& s) { return py::dict(py::arg("mean") = s.mean, py::arg("std") = s.std, py::arg("n") = s.n); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Link prediction with instance-discrimination graph contrastive learning";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);

  m.def("set_log_level", [](const std::string& level) {
    static const std::map<std::string, LogLevel> levels{
        {"debug", LogLevel::debug}, {"info", LogLevel::info}, {"warn", LogLevel::warn}, {"silent", LogLevel::silent}};
    const auto it = levels.find(level);
    if (it == levels.end()) throw py::value_error("level must be debug, info, warn or silent");
    log_level() = it->second;
  });

  py::class_<Graph>(m, "Graph")
      .def(py::init([](NodeId n, const EdgeArray& edges) { return Graph::from_pairs(n, to_pairs(edges)); }),
           py::arg("num_nodes"), py::arg("edges"), "Undirected graph; self-loops and duplicate pairs are dropped.")
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def_property_readonly("edges", [](const Graph& g) { return to_array(g.edges()); })
      .def("degree", &Graph::degree)
      .def("contains", &Graph::contains)
      .def("neighbors", [](const Graph& g, NodeId u) {
        const auto nb = g.neighbors(u);
        return std::vector<NodeId>(nb.begin(), nb.end());
      })
      .def("__repr__", [](const Graph& g) { return fmt::format("Graph(num_nodes={}, num_edges={})", g.num_nodes(), g.num_edges()); });

  m.def("load_edge_list", [](const std::filesystem::path& p) { return load_edge_list(p); }, py::arg("path"));
  m.def("load_dataset", &load_named_dataset, py::arg("name"), "Loads a manifest dataset from the data root.");
  m.def("write_edge_list", [](const std::filesystem::path& p, const Graph& g) { write_edge_list(p, g.edges()); },
        py::arg("path"), py::arg("graph"));

  py::class_<EdgeSplit>(m, "EdgeSplit")
      .def_readonly("train_graph", &EdgeSplit::train_graph)
      .def_property_readonly("train_pos", [](const EdgeSplit& s) { return to_array(s.train_pos); })
      .def_property_readonly("val_pos", [](const EdgeSplit& s) { return to_array(s.val_pos); })
      .def_property_readonly("test_pos", [](const EdgeSplit& s) { return to_array(s.test_pos); })
      .def_readonly("seed", &EdgeSplit::seed);

  m.def("random_link_split",
        [](const Graph& g, Seed seed, double train, double val, double test) {
          return random_link_split(g, {train, val, test}, seed);
        },
        py::arg("graph"), py::arg("seed"), py::arg("train") = 0.7, py::arg("val") = 0.1, py::arg("test") = 0.2);

  m.def("sample_negative_pairs",
        [](const Graph& g, std::size_t count, Seed seed, const std::optional<EdgeArray>& exclude) {
          EdgeSet ex;
          if (exclude) ex.insert(to_edges(*exclude));
          return to_array(sample_negative_pairs(g, count, ex, seed));
        },
        py::arg("graph"), py::arg("count"), py::arg("seed"), py::arg("exclude") = std::nullopt);

  m.def("normalized_adjacency", &normalized_adjacency, py::arg("graph"));

  py::class_<BlockState>(m, "BlockState")
      .def(py::init([](const std::vector<int>& labels) { return BlockState::from_labels(labels, BlockSource::external); }),
           py::arg("labels"))
      .def_readonly("assignment", &BlockState::assignment)
      .def_readonly("num_blocks", &BlockState::num_blocks)
      .def("block_sizes", &BlockState::block_sizes);

  m.def("louvain", &louvain, py::arg("graph"), py::arg("seed"), py::call_guard<py::gil_scoped_release>());
  m.def("modularity", &modularity, py::arg("graph"), py::arg("blocks"));

  m.def("fit_block_counts",
        [](const Graph& g, const BlockState& b) {
          const BlockEdgeCounts c = fit_block_counts(g, b);
          Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(c.num_blocks, c.num_blocks);
          for (int r = 0; r < c.num_blocks; ++r)
            for (int s = 0; s < c.num_blocks; ++s) out(r, s) = c.at(r, s);
          return out;
        },
        py::arg("graph"), py::arg("blocks"));
  m.def("sample_sbm",
        [](const Graph& g, const BlockState& b, Seed seed) { return sample_sbm(fit_block_counts(g, b), seed); },
        py::arg("graph"), py::arg("blocks"), py::arg("seed"),
        "Uniform draw among graphs with the same block-pair edge counts as `graph`.");
  m.def("sbm_augment", [](const Graph& g, Seed seed) { return sbm_augment(g, LouvainDetector{}, seed); }, py::arg("graph"),
        py::arg("seed"));

  py::class_<AugmentationSpec>(m, "AugmentationSpec")
      .def(py::init([](const std::string& kind, double e1, double e2, double f1, double f2, double cutoff) {
             AugmentationSpec s;
             s.kind = parse_augmentation(kind);
             s.drop_edge_rate_1 = e1;
             s.drop_edge_rate_2 = e2;
             s.drop_feature_rate_1 = f1;
             s.drop_feature_rate_2 = f2;
             s.cutoff = cutoff;
             s.validate();
             return s;
           }),
           py::arg("kind") = "random", py::arg("drop_edge_rate_1") = 0.2, py::arg("drop_edge_rate_2") = 0.2,
           py::arg("drop_feature_rate_1") = 0.2, py::arg("drop_feature_rate_2") = 0.2, py::arg("cutoff") = 0.9)
      .def_property_readonly("kind", [](const AugmentationSpec& s) { return std::string(to_string(s.kind)); })
      .def_readonly("drop_edge_rate_1", &AugmentationSpec::drop_edge_rate_1)
      .def_readonly("drop_edge_rate_2", &AugmentationSpec::drop_edge_rate_2)
      .def_readonly("cutoff", &AugmentationSpec::cutoff);

  m.def("make_views",
        [](const Graph& g, const AugmentationSpec& spec, Seed seed, const std::optional<BlockState>& blocks) {
          return make_views(g, spec, blocks, seed);
        },
        py::arg("graph"), py::arg("spec"), py::arg("seed"), py::arg("blocks") = std::nullopt);

  m.def("hits_at_k", [](std::vector<double> p, std::vector<double> n, int k) { return hits_at_k(score_set(p, n), k); },
        py::arg("y_pos"), py::arg("y_neg"), py::arg("k"));
  m.def("roc_auc", [](std::vector<double> p, std::vector<double> n) { return roc_auc(score_set(p, n)); }, py::arg("y_pos"),
        py::arg("y_neg"));
  m.def("average_precision", [](std::vector<double> p, std::vector<double> n) { return average_precision(score_set(p, n)); },
        py::arg("y_pos"), py::arg("y_neg"));

  m.def("friedman_test",
        [](const Eigen::MatrixXd& scores) {
          const FriedmanResult f = friedman_test(scores);
          return py::dict(py::arg("chi_sq") = f.chi_sq, py::arg("p_value") = f.p_value, py::arg("mean_ranks") = f.mean_ranks);
        },
        py::arg("scores"), "scores is runs x methods, higher is better.");
  m.def("bonferroni_dunn_groups",
        [](const Eigen::MatrixXd& scores, double alpha, bool two_sided) {
          const SignificanceGroups g =
              bonferroni_dunn_groups(scores, alpha, two_sided ? CriticalSide::two_sided : CriticalSide::one_sided);
          return py::dict(py::arg("best") = g.best, py::arg("worst") = g.worst,
                          py::arg("critical_difference") = g.critical_difference, py::arg("gate_passed") = g.gate_passed,
                          py::arg("chi_sq") = g.friedman.chi_sq, py::arg("p_value") = g.friedman.p_value);
        },
        py::arg("scores"), py::arg("alpha") = 0.05, py::arg("two_sided") = false);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_static("parse", &parse_config, py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def("save", [](const ExperimentConfig& c, const std::filesystem::path& p) { save_config(p, c); }, py::arg("path"))
      .def("to_text", &serialize_config)
      .def("validate", &ExperimentConfig::validate)
      .def_property_readonly("method_name", &ExperimentConfig::method_name)
      .def_readwrite("dataset", &ExperimentConfig::dataset)
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("hits_k", &ExperimentConfig::hits_k)
      .def_property(
          "model", [](const ExperimentConfig& c) { return std::string(to_string(c.model)); },
          [](ExperimentConfig& c, const std::string& s) { c.model = parse_model(s); })
      .def_property(
          "augmentation", [](const ExperimentConfig& c) { return std::string(to_string(c.augmentation.kind)); },
          [](ExperimentConfig& c, const std::string& s) { c.augmentation.kind = parse_augmentation(s); })
      .def("__eq__", [](const ExperimentConfig& a, const ExperimentConfig& b) { return a == b; });

  m.def("parse_seed_list", &parse_seed_list, py::arg("text"));

  m.def("run_experiment",
        [](const ExperimentConfig& cfg, const Graph& g, int workers, std::optional<std::filesystem::path> out) {
          ExperimentResult r;
          {
            py::gil_scoped_release release;
            r = run_experiment(cfg, g, {.workers = workers, .out_dir = out});
          }
          py::list runs;
          for (const SeedResult& s : r.runs)
            runs.append(py::dict(py::arg("seed") = s.seed, py::arg("ok") = s.ok, py::arg("error") = s.error,
                                 py::arg("test") = metrics_dict(s.test), py::arg("skipped_epochs") = s.skipped_epochs));
          return py::dict(py::arg("method") = cfg.method_name(), py::arg("runs") = runs,
                          py::arg("hits") = summary_dict(r.hits), py::arg("ap") = summary_dict(r.ap),
                          py::arg("auc") = summary_dict(r.auc), py::arg("csv") = metrics_csv(r));
        },
        py::arg("config"), py::arg("graph"), py::arg("workers") = 1, py::arg("out_dir") = std::nullopt);
}
