#include "idlink/eval.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace idlink {

namespace {

void require_nonempty(const ScoreSet& s, const char* what) {
  if (s.y_pos.empty() || s.y_neg.empty())
    throw std::invalid_argument(fmt::format("{}: both positive and negative scores are required", what));
}

}  // namespace

double hits_at_k(const ScoreSet& s, int k) {
  if (s.y_pos.empty()) throw std::invalid_argument("hits_at_k: no positive scores");
  if (k < 1 || static_cast<std::size_t>(k) > s.y_neg.size())
    throw std::invalid_argument(fmt::format("hits_at_k: k = {} but only {} negatives", k, s.y_neg.size()));
  std::vector<double> neg = s.y_neg;
  std::nth_element(neg.begin(), neg.begin() + (k - 1), neg.end(), std::greater<>());
  const double threshold = neg[k - 1];
  const auto hits = std::count_if(s.y_pos.begin(), s.y_pos.end(), [threshold](double y) { return y > threshold; });
  return static_cast<double>(hits) / static_cast<double>(s.y_pos.size());
}

double roc_auc(const ScoreSet& s) {
  require_nonempty(s, "roc_auc");
  const std::size_t np = s.y_pos.size();
  const std::size_t nn = s.y_neg.size();
  // (score, is_positive) sorted ascending; average ranks over tie groups.
  std::vector<std::pair<double, bool>> all;
  all.reserve(np + nn);
  for (double y : s.y_pos) all.emplace_back(y, true);
  for (double y : s.y_neg) all.emplace_back(y, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < all.size() && all[j].first == all[i].first) pos_in_group += all[j++].second;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(np) * static_cast<double>(np + 1);
  return u / (static_cast<double>(np) * static_cast<double>(nn));
}

double average_precision(const ScoreSet& s) {
  require_nonempty(s, "average_precision");
  std::vector<std::pair<double, bool>> all;
  all.reserve(s.y_pos.size() + s.y_neg.size());
  for (double y : s.y_pos) all.emplace_back(y, true);
  for (double y : s.y_neg) all.emplace_back(y, false);
  // Descending score; among equal scores negatives come first.
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!all[i].second) continue;
    ++tp;
    ap += static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  return ap / static_cast<double>(s.y_pos.size());
}

SplitMetrics evaluate_pairs(const LinkScorer& scorer, const EdgeSplit& split, std::span<const Edge> positives, int k,
                            Seed seed) {
  if (positives.empty()) throw std::invalid_argument("evaluate_pairs: no positive pairs");
  const std::vector<Edge> negatives =
      sample_negative_pairs(split.train_graph, positives.size(), split.known_positives(), seed);
  const Eigen::VectorXd yp = scorer(positives);
  const Eigen::VectorXd yn = scorer(negatives);
  ScoreSet s{std::vector<double>(yp.data(), yp.data() + yp.size()), std::vector<double>(yn.data(), yn.data() + yn.size())};
  return SplitMetrics{hits_at_k(s, k), average_precision(s), roc_auc(s)};
}

SplitMetrics evaluate_split(const LinkScorer& scorer, const EdgeSplit& split, int k, Seed seed) {
  return evaluate_pairs(scorer, split, split.test_pos, k, seed);
}

std::vector<double> midranks_descending(std::span<const double> row) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  std::vector<double> ranks(row.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && row[idx[j]] == row[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[idx[t]] = r;
    i = j;
  }
  return ranks;
}

FriedmanResult friedman_test(const Eigen::MatrixXd& scores) {
  const auto n = scores.rows();
  const auto k = scores.cols();
  if (n < 2 || k < 2)
    throw std::invalid_argument(fmt::format("friedman_test needs >= 2 runs and >= 2 methods, got {}x{}", n, k));
  FriedmanResult r;
  r.mean_ranks.assign(k, 0.0);
  std::vector<double> row(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) row[j] = scores(i, j);
    const std::vector<double> ranks = midranks_descending(row);
    for (Eigen::Index j = 0; j < k; ++j) r.mean_ranks[j] += ranks[j];
  }
  double ss = 0.0;
  const double centre = (static_cast<double>(k) + 1.0) / 2.0;
  for (double& m : r.mean_ranks) {
    m /= static_cast<double>(n);
    ss += (m - centre) * (m - centre);
  }
  const double kd = static_cast<double>(k);
  r.chi_sq = 12.0 * static_cast<double>(n) / (kd * (kd + 1.0)) * ss;
  r.p_value = r.chi_sq <= 0.0 ? 1.0 : boost::math::gamma_q((kd - 1.0) / 2.0, r.chi_sq / 2.0);
  return r;
}

SignificanceGroups bonferroni_dunn_groups(const Eigen::MatrixXd& scores, double alpha, CriticalSide side) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0, 1)");
  SignificanceGroups g;
  g.friedman = friedman_test(scores);
  const double k = static_cast<double>(scores.cols());
  const double n = static_cast<double>(scores.rows());
  const double tail = side == CriticalSide::one_sided ? alpha / (k - 1.0) : alpha / (2.0 * (k - 1.0));
  const double q = boost::math::quantile(boost::math::normal(), 1.0 - tail);
  g.critical_difference = q * std::sqrt(k * (k + 1.0) / (6.0 * n));
  if (!(g.friedman.p_value < alpha)) return g;
  g.gate_passed = true;
  const auto& mr = g.friedman.mean_ranks;
  const double top = *std::min_element(mr.begin(), mr.end());
  const double bottom = *std::max_element(mr.begin(), mr.end());
  for (std::size_t j = 0; j < mr.size(); ++j) {
    if (mr[j] - top <= g.critical_difference) g.best.push_back(static_cast<int>(j));
    if (bottom - mr[j] <= g.critical_difference) g.worst.push_back(static_cast<int>(j));
  }
  return g;
}

}  // namespace idlink
