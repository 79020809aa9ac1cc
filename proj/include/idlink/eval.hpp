#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

#include "idlink/graph.hpp"

namespace idlink {

/// Scores on held-out positive pairs and on sampled negative pairs.
struct ScoreSet {
  std::vector<double> y_pos;
  std::vector<double> y_neg;
};

/// Fraction of positives scoring strictly above the k-th largest negative.
/// Throws std::invalid_argument when k is outside [1, |y_neg|] or y_pos is empty.
double hits_at_k(const ScoreSet& s, int k);

/// Mann-Whitney AUC; tied positive/negative pairs count 1/2.
double roc_auc(const ScoreSet& s);

/// Average precision with positives as the relevant class. Ties are broken
/// pessimistically: within a group of equal scores, negatives rank first.
double average_precision(const ScoreSet& s);

struct SplitMetrics {
  double hits = 0.0;
  double ap = 0.0;
  double auc = 0.0;
};

/// Maps candidate pairs to scores (any monotone score works, metrics only use ranks).
using LinkScorer = std::function<Eigen::VectorXd(std::span<const Edge>)>;

/// Scores `positives` against an equal number of negatives sampled outside every known
/// positive of the split.
SplitMetrics evaluate_pairs(const LinkScorer& scorer, const EdgeSplit& split, std::span<const Edge> positives, int k,
                            Seed seed);
/// evaluate_pairs on the test positives.
SplitMetrics evaluate_split(const LinkScorer& scorer, const EdgeSplit& split, int k, Seed seed);

/// Ranks within one row, 1 = highest score, ties get the average of their ranks.
std::vector<double> midranks_descending(std::span<const double> row);

struct FriedmanResult {
  double chi_sq = 0.0;
  double p_value = 1.0;
  std::vector<double> mean_ranks;  ///< per method, 1 = best
};

/// scores is runs x methods, higher is better. Needs at least 2 runs and 2 methods.
FriedmanResult friedman_test(const Eigen::MatrixXd& scores);

/// How the Bonferroni-corrected normal quantile is taken.
enum class CriticalSide { one_sided, two_sided };

struct SignificanceGroups {
  std::vector<int> best;   ///< method indices
  std::vector<int> worst;
  double critical_difference = 0.0;
  FriedmanResult friedman;
  bool gate_passed = false;
};

/// Critical difference CD = q * sqrt(k(k+1)/(6n)) with q = z(1 - alpha/(k-1)) (one-sided)
/// or z(1 - alpha/(2(k-1))) (two-sided). best = methods within CD of the best mean rank,
/// worst = methods within CD of the worst. Both empty unless the Friedman p < alpha.
SignificanceGroups bonferroni_dunn_groups(const Eigen::MatrixXd& scores, double alpha,
                                          CriticalSide side = CriticalSide::one_sided);

}  // namespace idlink
