#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "idlink/error.hpp"
#include "idlink/graph.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace idlink;
using idlink::testing::complete_graph;
using idlink::testing::path_graph;
using idlink::testing::random_graph;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "idlink_unit";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::set<Edge> as_set(std::span<const Edge> e) { return {e.begin(), e.end()}; }

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("edge list loading drops self-loops and reversed duplicates") {
    const Graph g = load_edge_list(write_temp("dedupe.txt", "0 1\n1 0\n2 2\n"));
    CHECK(g.num_nodes() == 3);
    REQUIRE(g.num_edges() == 1);
    CHECK(g.edges()[0] == Edge{0, 1});
    CHECK(g.features().is_identity());
    CHECK(g.features().cols() == 3);
  }

  TEST_CASE("edge list loading honours comments and n_hint") {
    const Graph g = load_edge_list(write_temp("hint.txt", "# header\n\n0 1\n1 2\n"), 10);
    CHECK(g.num_nodes() == 10);
    CHECK(g.num_edges() == 2);
    CHECK(g.contains(2, 1));
    CHECK_FALSE(g.contains(0, 2));
  }

  TEST_CASE("malformed edge lists are rejected") {
    CHECK_THROWS_AS(load_edge_list(write_temp("bad.txt", "0 x\n")), ParseError);
    CHECK_THROWS_AS(load_edge_list(write_temp("neg.txt", "0 -1\n")), ParseError);
    CHECK_THROWS_AS(load_edge_list(write_temp("empty.txt", "# nothing\n")), ParseError);
    CHECK_THROWS_AS(load_edge_list("/nonexistent/idlink.txt"), ParseError);
  }

  TEST_CASE("remapped loading persists the id map") {
    const fs::path map = fs::temp_directory_path() / "idlink_unit" / "ids.map";
    const Graph g = load_edge_list_remapped(write_temp("remap.txt", "100 7\n7 5000\n"), map);
    CHECK(g.num_nodes() == 3);
    CHECK(g.num_edges() == 2);
    const auto ids = read_id_map(map);
    CHECK(ids.at(100) == 0);
    CHECK(ids.at(7) == 1);
    CHECK(ids.at(5000) == 2);
    CHECK(g.contains(ids.at(7), ids.at(5000)));
  }

  TEST_CASE("strict constructor rejects invalid edges") {
    CHECK_THROWS_AS(Graph(3, {{0, 3}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{1, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(Graph(3, {{0, 1}, {0, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(make_edge(2, 2), std::invalid_argument);
  }

  TEST_CASE("split sizes follow the floor rule") {
    const Graph g10 = complete_graph(5);
    REQUIRE(g10.num_edges() == 10);
    for (Seed s : {0, 1, 2, 99}) {
      const EdgeSplit sp = random_link_split(g10, {}, s);
      CHECK(sp.train_pos.size() == 7);
      CHECK(sp.val_pos.size() == 1);
      CHECK(sp.test_pos.size() == 2);
    }
    std::vector<Edge> nine(g10.edges().begin(), g10.edges().begin() + 9);
    const EdgeSplit sp9 = random_link_split(Graph(5, nine), {}, 3);
    CHECK(sp9.train_pos.size() == 8);
    CHECK(sp9.val_pos.size() == 0);
    CHECK(sp9.test_pos.size() == 1);
  }

  TEST_CASE("split partitions the edge set deterministically") {
    const Graph g = random_graph(40, 0.2, 5);
    const EdgeSplit a = random_link_split(g, {0.85, 0.05, 0.1}, 11);
    const EdgeSplit b = random_link_split(g, {0.85, 0.05, 0.1}, 11);
    CHECK(a.train_pos == b.train_pos);
    CHECK(a.val_pos == b.val_pos);
    CHECK(a.test_pos == b.test_pos);

    std::set<Edge> all;
    for (const auto* part : {&a.train_pos, &a.val_pos, &a.test_pos})
      for (const Edge& e : *part) CHECK(all.insert(e).second);
    CHECK(all == as_set(g.edges()));
    CHECK(as_set(a.train_graph.edges()) == as_set(a.train_pos));
    CHECK(a.train_graph.num_nodes() == g.num_nodes());

    const EdgeSplit c = random_link_split(g, {0.85, 0.05, 0.1}, 12);
    CHECK(c.test_pos != a.test_pos);
  }

  TEST_CASE("split preconditions") {
    CHECK_THROWS_AS(random_link_split(path_graph(3), {}, 0), std::invalid_argument);
    CHECK_THROWS_AS(random_link_split(path_graph(6), {0.5, 0.2, 0.2}, 0), std::invalid_argument);
    CHECK_THROWS_AS(random_link_split(path_graph(6), {1.2, -0.1, -0.1}, 0), std::invalid_argument);
  }

  TEST_CASE("normalized adjacency of a path") {
    const SparseMatrix a = normalized_adjacency(path_graph(3));
    CHECK(a.coeff(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a.coeff(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
    CHECK(a.coeff(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(a.coeff(0, 2) == 0.0);

    const SparseMatrix one = normalized_adjacency(Graph(1, {}));
    CHECK(one.coeff(0, 0) == 1.0);
  }

  TEST_CASE("normalized adjacency is symmetric with entries in (0, 1]") {
    const Graph g = random_graph(30, 0.15, 8);
    const SparseMatrix a = normalized_adjacency(g);
    const Eigen::MatrixXd d(a);
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < d.rows(); ++i)
      for (int j = 0; j < d.cols(); ++j) {
        const bool linked = i == j || g.contains(i, j);
        if (linked) {
          CHECK(d(i, j) > 0.0);
          CHECK(d(i, j) <= 1.0);
        } else {
          CHECK(d(i, j) == 0.0);
        }
      }
  }

  TEST_CASE("negative sampling: forced and empty cases") {
    std::vector<Edge> e;
    const Graph k4 = complete_graph(4);
    for (Edge x : k4.edges())
      if (!(x == Edge{0, 3})) e.push_back(x);
    const Graph g(4, e);
    const auto neg = sample_negative_pairs(g, 1, {}, 7);
    REQUIRE(neg.size() == 1);
    CHECK(neg[0] == Edge{0, 3});
    CHECK(sample_negative_pairs(g, 0, {}, 7).empty());
    CHECK_THROWS_AS(sample_negative_pairs(g, 2, {}, 7), InfeasibleError);
    EdgeSet ex;
    ex.insert(0, 3);
    CHECK_THROWS_AS(sample_negative_pairs(g, 1, ex, 7), InfeasibleError);
  }

  TEST_CASE("negative sampling never returns excluded pairs") {
    for (Seed s = 0; s < 20; ++s) {
      const Graph g = random_graph(25, 0.3, s);
      const Graph other = random_graph(25, 0.2, s + 100);
      const EdgeSet ex(other.edges());
      std::size_t admissible = 0;
      for (NodeId u = 0; u < 25; ++u)
        for (NodeId v = u + 1; v < 25; ++v) admissible += !g.contains(u, v) && !ex.contains(u, v);
      const std::size_t count = s % 2 ? admissible : admissible / 3;
      const auto neg = sample_negative_pairs(g, count, ex, s);
      REQUIRE(neg.size() == count);
      std::set<Edge> seen;
      for (const Edge& p : neg) {
        CHECK(p.u < p.v);
        CHECK_FALSE(g.contains(p.u, p.v));
        CHECK_FALSE(ex.contains(p));
        CHECK(seen.insert(p).second);
      }
    }
  }

  TEST_CASE("negative sampling is uniform over admissible pairs") {
    const Graph g(100, {});
    const int trials = 100000;
    std::map<Edge, int> freq;
    for (int t = 0; t < trials; ++t) {
      const auto neg = sample_negative_pairs(g, 10, {}, derive_seed(42, static_cast<std::uint64_t>(t)));
      REQUIRE(neg.size() == 10);
      for (const Edge& p : neg) ++freq[p];
    }
    const double p = 10.0 / 4950.0;
    const double mu = trials * p;
    const double sigma = std::sqrt(trials * p * (1 - p));
    for (Edge fixed : {Edge{0, 1}, Edge{17, 42}, Edge{98, 99}}) CHECK(std::abs(freq[fixed] - mu) <= 3 * sigma);
    CHECK(freq.size() == 4950);
  }

  TEST_CASE("sample_negative_pairs is deterministic") {
    const Graph g = random_graph(50, 0.1, 2);
    CHECK(sample_negative_pairs(g, 30, {}, 5) == sample_negative_pairs(g, 30, {}, 5));
  }

  TEST_CASE("identity features are not materialized") {
    const FeatureMatrix x = FeatureMatrix::identity(5000);
    CHECK(x.values().size() == 0);
    CHECK(x.column_mask().size() == 5000);
    std::vector<std::uint8_t> drop(5000, 0);
    drop[2] = 1;
    const FeatureMatrix m = x.with_masked_columns(drop);
    CHECK(m.column_mask()(2) == 0.0);
    CHECK(m.column_mask()(3) == 1.0);
  }

  TEST_CASE("manifest lookup") {
    const fs::path p = write_temp("manifest.json", R"({"datasets": [
      {"name": "Toy", "path": "toy.txt", "directed": false, "remap_ids": false, "nodes": 3, "edges": 4}
    ]})");
    const auto m = load_manifest(p);
    REQUIRE(m.size() == 1);
    const DatasetInfo& info = find_dataset(m, "Toy");
    CHECK(info.expected_undirected_edges() == 2);
    write_temp("toy.txt", "0 1\n1 2\n");
    const Graph g = load_dataset(info, p.parent_path());
    CHECK(g.num_nodes() == 3);
    CHECK(g.num_edges() == 2);
    CHECK_THROWS_AS(find_dataset(m, "Missing"), std::invalid_argument);
  }
}
