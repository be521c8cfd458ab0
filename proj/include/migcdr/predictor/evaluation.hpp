#pragma once
// Back-transformed regression metrics, classifier metrics, permutation
// importance and the leave-one-out 1-NN Bayes accuracy bound.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "migcdr/predictor/features.hpp"
#include "migcdr/util/rng.hpp"

namespace migcdr {

struct RegressionReport {
  double mse = 0.0;
  std::optional<double> r2;
};

/// MSE and R^2 of predictions against targets, both on the original scale.
inline RegressionReport regression_metrics(const Vector& pred, const Vector& truth) {
  RegressionReport r;
  const double n = static_cast<double>(truth.size());
  if (truth.size() == 0) return r;
  const double ss_res = (truth - pred).squaredNorm();
  r.mse = ss_res / n;
  const double mean = truth.mean();
  const double ss_tot = (truth.array() - mean).square().sum();
  if (ss_tot > 0.0) r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

/// Applies the inverse target transform to predictions and targets before
/// scoring. With Transform::none this is the direct computation.
inline RegressionReport evaluate_regression(const Vector& pred_transformed, const Vector& y_transformed, Transform t) {
  if (t == Transform::none) return regression_metrics(pred_transformed, y_transformed);
  Vector p(pred_transformed.size()), y(y_transformed.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i) = inverse_transform(t, pred_transformed(i));
    y(i) = inverse_transform(t, y_transformed(i));
  }
  return regression_metrics(p, y);
}

/// Same, but against targets already on the original scale.
inline RegressionReport evaluate_regression_original(const Vector& pred_transformed, const Vector& y_original, Transform t) {
  Vector p(pred_transformed.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = inverse_transform(t, pred_transformed(i));
  return regression_metrics(p, y_original);
}

struct ClassReport {
  double accuracy = 0.0;
  std::array<std::optional<double>, 2> recall;
  std::array<std::optional<double>, 2> precision;
  std::optional<double> average_recall;
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [truth][pred]
};

inline ClassReport evaluate_classifier(std::span<const int> pred, std::span<const int> truth) {
  ClassReport r;
  if (truth.empty()) return r;
  for (std::size_t i = 0; i < truth.size(); ++i) ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  const std::size_t correct = r.confusion[0][0] + r.confusion[1][1];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (int c = 0; c < 2; ++c) {
    const std::size_t actual = r.confusion[c][0] + r.confusion[c][1];
    const std::size_t predicted = r.confusion[0][c] + r.confusion[1][c];
    if (actual > 0) r.recall[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(actual);
    if (predicted > 0) r.precision[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(predicted);
  }
  if (r.recall[0] && r.recall[1]) r.average_recall = (*r.recall[0] + *r.recall[1]) / 2.0;
  return r;
}

inline std::vector<int> to_labels(const Vector& y) {
  std::vector<int> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = y(i) > 0.5 ? 1 : 0;
  return out;
}

struct ImportanceEntry {
  std::string feature;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> drops;
};

/// Breiman permutation importance on a held-out set. `score` maps a design
/// matrix to the metric; for minimized metrics the difference is negated so
/// positive always means the feature mattered. Each group of columns is
/// shuffled jointly with one row permutation.
inline std::vector<ImportanceEntry> permutation_importance(const std::function<double(const Eigen::MatrixXd&)>& score,
                                                           const Eigen::MatrixXd& X,
                                                           const std::vector<std::vector<int>>& groups,
                                                           const std::vector<std::string>& names, bool minimize,
                                                           int n_perm = 5, std::uint64_t seed = 0) {
  const double base = score(X);
  std::vector<ImportanceEntry> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ImportanceEntry e;
    e.feature = g < names.size() ? names[g] : std::to_string(g);
    for (int r = 0; r < n_perm; ++r) {
      Rng rng(derive_seed(seed, "perm", static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(r)));
      std::vector<Eigen::Index> perm(static_cast<std::size_t>(X.rows()));
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm.begin(), perm.end());
      Eigen::MatrixXd Xp = X;
      for (int c : groups[g])
        for (Eigen::Index i = 0; i < X.rows(); ++i) Xp(i, c) = X(perm[static_cast<std::size_t>(i)], c);
      const double s = score(Xp);
      e.drops.push_back(minimize ? s - base : base - s);
    }
    const double n = static_cast<double>(e.drops.size());
    e.mean = std::accumulate(e.drops.begin(), e.drops.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : e.drops) ss += (d - e.mean) * (d - e.mean);
    e.sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    out.push_back(std::move(e));
  }
  return out;
}

struct BayesBound {
  double loo_error = 0.0;
  double bound = 1.0;
  std::size_t conflicting_duplicates = 0;
};

/// Leave-one-out 1-NN error eps and the Bayes accuracy bound 1 - eps/2. A
/// point with an exact duplicate of the other label counts as an error.
inline BayesBound bayes_accuracy_upper_bound(const Eigen::MatrixXd& X, std::span<const int> y) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw ParameterError("bayes bound needs at least 2 points");
  BayesBound b;
  std::size_t errors = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index nn = -1;
    bool conflict = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (X.row(i) - X.row(j)).squaredNorm();
      if (d == 0.0 && y[static_cast<std::size_t>(j)] != y[static_cast<std::size_t>(i)]) conflict = true;
      if (d < best) {
        best = d;
        nn = j;
      }
    }
    if (conflict) {
      ++b.conflicting_duplicates;
      ++errors;
    } else if (y[static_cast<std::size_t>(nn)] != y[static_cast<std::size_t>(i)]) {
      ++errors;
    }
  }
  b.loo_error = static_cast<double>(errors) / static_cast<double>(n);
  b.bound = 1.0 - b.loo_error / 2.0;
  return b;
}

}  // namespace migcdr
