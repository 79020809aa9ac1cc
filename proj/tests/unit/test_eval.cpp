#include <doctest.h>

#include <cmath>

#include "idlink/eval.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace idlink;
using idlink::testing::random_graph;

namespace {

Eigen::MatrixXd strict_order(int runs) {
  Eigen::MatrixXd s(runs, 3);
  for (int i = 0; i < runs; ++i) s.row(i) << 0.9 + 0.001 * i, 0.5 + 0.001 * i, 0.1 + 0.001 * i;
  return s;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("hits at k") {
    CHECK(hits_at_k({{0.9, 0.5, 0.3}, {0.8, 0.4, 0.2}}, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(hits_at_k({{0.9, 0.95}, {0.1, 0.2, 0.3}}, 1) == 1.0);
    CHECK(hits_at_k({{0.9, 0.95}, {0.1, 0.2, 0.3}}, 3) == 1.0);
    CHECK(hits_at_k({{0.4, 0.4}, {0.4, 0.2}}, 1) == 0.0);
    CHECK_THROWS_AS(hits_at_k({{0.4}, {0.4, 0.2}}, 3), std::invalid_argument);
    CHECK_THROWS_AS(hits_at_k({{}, {0.4, 0.2}}, 1), std::invalid_argument);
  }

  TEST_CASE("roc auc") {
    CHECK(roc_auc({{0.9, 0.8}, {0.1, 0.2}}) == 1.0);
    CHECK(roc_auc({{0.3, 0.3}, {0.3, 0.3, 0.3}}) == 0.5);
    // Pairs: (0.9,0.5) (0.9,0.1) (0.4,0.1) are ordered correctly, (0.4,0.5) is not.
    CHECK(roc_auc({{0.9, 0.4}, {0.5, 0.1}}) == doctest::Approx(0.75));
    CHECK(roc_auc({{0.9, 0.4}, {0.5, 0.1}}) == props::auc_oracle({{0.9, 0.4}, {0.5, 0.1}}));
    CHECK_THROWS_AS(roc_auc({{}, {0.1}}), std::invalid_argument);
  }

  TEST_CASE("average precision") {
    CHECK(average_precision({{0.9}, {0.1, 0.2}}) == 1.0);
    CHECK(average_precision({{0.8}, {0.9}}) == doctest::Approx(0.5));
    const ScoreSet base{{0.9, 0.5, 0.7}, {0.6, 0.3}};
    ScoreSet more = base;
    more.y_neg.insert(more.y_neg.end(), {0.1, 0.05, 0.2});
    const ScoreSet shifted{{0.9, 0.5, 0.7}, {0.6, 0.3, 0.01}};
    CHECK(average_precision(shifted) == average_precision(base));
    // Ties are pessimistic: a tied negative ranks ahead of the positive.
    CHECK(average_precision({{0.5}, {0.5}}) == doctest::Approx(0.5));
  }

  TEST_CASE("metrics match brute-force oracles on random score sets") {
    const auto r = props::metric_oracle_comparison(1000, 17);
    CHECK(r.sets == 1000);
    CHECK(r.max_hits_diff <= 1e-12);
    CHECK(r.max_auc_diff <= 1e-12);
    CHECK(r.max_ap_diff <= 1e-12);
  }

  TEST_CASE("metrics are invariant under monotone transformations") {
    Rng rng = make_rng(5);
    for (int t = 0; t < 100; ++t) {
      const ScoreSet s = props::random_score_set(rng);
      ScoreSet m = s;
      for (double& x : m.y_pos) x = std::exp(3 * x) - 7;
      for (double& x : m.y_neg) x = std::exp(3 * x) - 7;
      const int k = 1 + static_cast<int>(uniform_index(rng, s.y_neg.size()));
      CHECK(hits_at_k(s, k) == hits_at_k(m, k));
      CHECK(roc_auc(s) == doctest::Approx(roc_auc(m)).epsilon(1e-14));
      CHECK(average_precision(s) == doctest::Approx(average_precision(m)).epsilon(1e-14));
    }
  }

  TEST_CASE("oracle scorer gives perfect metrics") {
    const Graph g = random_graph(60, 0.1, 3);
    const EdgeSplit split = random_link_split(g, {}, 2);
    const EdgeSet truth(g.edges());
    const LinkScorer oracle = [&](std::span<const Edge> pairs) {
      Eigen::VectorXd s(static_cast<Eigen::Index>(pairs.size()));
      for (std::size_t i = 0; i < pairs.size(); ++i) s(i) = truth.contains(pairs[i]) ? 1.0 : 0.0;
      return s;
    };
    const SplitMetrics m = evaluate_split(oracle, split, 5, 1);
    CHECK(m.hits == 1.0);
    CHECK(m.ap == 1.0);
    CHECK(m.auc == 1.0);
  }

  TEST_CASE("random scorer has AUC near one half") {
    const Graph g = random_graph(80, 0.1, 4);
    const EdgeSplit split = random_link_split(g, {}, 2);
    const int seeds = 200;
    double total = 0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng = make_rng(derive_seed(99, static_cast<std::uint64_t>(s)));
      const LinkScorer noise = [&](std::span<const Edge> pairs) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(pairs.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = uniform01(rng);
        return v;
      };
      total += evaluate_split(noise, split, 5, static_cast<Seed>(s)).auc;
    }
    const double n = static_cast<double>(split.test_pos.size());
    const double sigma = std::sqrt((2 * n + 1) / (12 * n * n)) / std::sqrt(static_cast<double>(seeds));
    CHECK(std::abs(total / seeds - 0.5) <= 3 * sigma);
  }

  TEST_CASE("evaluation is deterministic and excludes every known positive") {
    const Graph g = random_graph(40, 0.15, 5);
    const EdgeSplit split = random_link_split(g, {}, 3);
    std::vector<Edge> seen;
    const LinkScorer record = [&](std::span<const Edge> pairs) {
      seen.insert(seen.end(), pairs.begin(), pairs.end());
      return Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(pairs.size()), 0.0, 1.0).eval();
    };
    const SplitMetrics a = evaluate_split(record, split, 3, 8);
    const std::size_t n_test = split.test_pos.size();
    for (std::size_t i = n_test; i < seen.size(); ++i) CHECK_FALSE(g.contains(seen[i].u, seen[i].v));
    const SplitMetrics b = evaluate_split(record, split, 3, 8);
    CHECK(a.hits == b.hits);
    CHECK(a.ap == b.ap);
    CHECK(a.auc == b.auc);
  }

  TEST_CASE("midranks") {
    CHECK(midranks_descending(std::vector<double>{0.1, 0.9, 0.5}) == std::vector<double>{3, 1, 2});
    CHECK(midranks_descending(std::vector<double>{0.5, 0.5, 0.1, 0.9}) == std::vector<double>{2.5, 2.5, 4, 1});
  }

  TEST_CASE("friedman reference values") {
    const FriedmanResult tied = friedman_test(Eigen::MatrixXd::Constant(10, 3, 0.4));
    CHECK(tied.chi_sq == 0.0);
    CHECK(tied.p_value == doctest::Approx(1.0));

    const FriedmanResult r = friedman_test(strict_order(10));
    CHECK(std::abs(r.chi_sq - 20.0) <= 1e-6);
    // Survival function of chi-square with 2 dof is exp(-x / 2).
    CHECK(std::abs(r.p_value - std::exp(-10.0)) <= 1e-7);
    CHECK(r.mean_ranks == std::vector<double>{1, 2, 3});
    CHECK_THROWS_AS(friedman_test(Eigen::MatrixXd::Zero(1, 3)), std::invalid_argument);
    CHECK_THROWS_AS(friedman_test(Eigen::MatrixXd::Zero(4, 1)), std::invalid_argument);
  }

  TEST_CASE("friedman consumes ranks only") {
    Rng rng = make_rng(2);
    const Eigen::MatrixXd s = props::random_matrix(12, 4, rng);
    Eigen::MatrixXd t = s;
    for (Eigen::Index i = 0; i < t.rows(); ++i) t.row(i) = (t.row(i).array() * (1.0 + i) + 3.0 * i).exp();
    CHECK(friedman_test(s).chi_sq == doctest::Approx(friedman_test(t).chi_sq).epsilon(1e-14));
  }

  TEST_CASE("bonferroni-dunn groups") {
    const SignificanceGroups g = bonferroni_dunn_groups(strict_order(10), 0.05);
    CHECK(g.gate_passed);
    CHECK(g.best == std::vector<int>{0});
    CHECK(g.worst == std::vector<int>{2});
    CHECK(g.critical_difference == doctest::Approx(1.959963985 * std::sqrt(12.0 / 60.0)).epsilon(1e-8));

    const SignificanceGroups two = bonferroni_dunn_groups(strict_order(10), 0.05, CriticalSide::two_sided);
    CHECK(two.critical_difference == doctest::Approx(2.241402728 * std::sqrt(12.0 / 60.0)).epsilon(1e-8));
    CHECK(two.best == std::vector<int>{0, 1});

    Eigen::MatrixXd pair(20, 2);
    for (int i = 0; i < 20; ++i) pair.row(i) << 1.0, 0.0;
    const SignificanceGroups p = bonferroni_dunn_groups(pair, 0.05);
    CHECK(p.best == std::vector<int>{0});
    CHECK(p.worst == std::vector<int>{1});

    const SignificanceGroups none = bonferroni_dunn_groups(Eigen::MatrixXd::Constant(10, 3, 1.0), 0.05);
    CHECK_FALSE(none.gate_passed);
    CHECK(none.best.empty());
    CHECK(none.worst.empty());
  }

  TEST_CASE("the top-ranked method is always in the best group") {
    Rng rng = make_rng(11);
    for (int t = 0; t < 50; ++t) {
      Eigen::MatrixXd s = props::random_matrix(10, 5, rng);
      s.col(t % 5).array() += 0.8;
      const SignificanceGroups g = bonferroni_dunn_groups(s, 0.05);
      if (!g.gate_passed) continue;
      const auto& r = g.friedman.mean_ranks;
      const int top = static_cast<int>(std::min_element(r.begin(), r.end()) - r.begin());
      CHECK(std::find(g.best.begin(), g.best.end(), top) != g.best.end());
    }
  }
}
