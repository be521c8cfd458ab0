#pragma once
// Model registry, hyperparameter grids and k-fold cross-validated fitting.

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "migcdr/predictor/evaluation.hpp"
#include "migcdr/predictor/linear.hpp"
#include "migcdr/predictor/svm.hpp"

namespace migcdr {

enum class RegKind : int { OLS, Ridge, ElasticNet, KNN, SVR_lin, SVR_poly, SVR_rbf };
enum class ClsKind : int { LogRegL2, SVM_lin, SVM_poly, SVM_rbf };

inline const char* reg_name(RegKind k) {
  static const char* n[] = {"OLS", "Ridge", "ElasticNet", "KNN", "SVR-lin", "SVR-poly", "SVR-RBF"};
  return n[static_cast<int>(k)];
}
inline const char* cls_name(ClsKind k) {
  static const char* n[] = {"LogReg", "SVM-lin", "SVM-poly", "SVM-RBF"};
  return n[static_cast<int>(k)];
}

inline std::optional<RegKind> parse_reg(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(RegKind::SVR_rbf); ++i)
    if (s == reg_name(static_cast<RegKind>(i))) return static_cast<RegKind>(i);
  return std::nullopt;
}
inline std::optional<ClsKind> parse_cls(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ClsKind::SVM_rbf); ++i)
    if (s == cls_name(static_cast<ClsKind>(i))) return static_cast<ClsKind>(i);
  return std::nullopt;
}

inline std::vector<double> logspace(double lo_exp, double hi_exp, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / std::max(1, n - 1)));
  return v;
}

inline std::unique_ptr<Regressor> make_regressor(RegKind k, const Params& p) {
  switch (k) {
    case RegKind::OLS: return std::make_unique<LinearRegression>(0.0);
    case RegKind::Ridge: return std::make_unique<LinearRegression>(param(p, "lambda", 1.0));
    case RegKind::ElasticNet:
      return std::make_unique<ElasticNet>(param(p, "alpha", 1.0), param(p, "l1_ratio", 0.5));
    case RegKind::KNN: return std::make_unique<KnnRegressor>(static_cast<int>(param(p, "k", 5)));
    case RegKind::SVR_lin:
      return std::make_unique<KernelSvr>(Kernel{KernelKind::linear}, param(p, "C", 1.0), param(p, "epsilon", 0.1));
    case RegKind::SVR_poly:
      return std::make_unique<KernelSvr>(
          Kernel{KernelKind::poly, param(p, "gamma", 0.1), param(p, "degree", 3), param(p, "coef0", 1.0)},
          param(p, "C", 1.0), param(p, "epsilon", 0.1));
    case RegKind::SVR_rbf:
      return std::make_unique<KernelSvr>(Kernel{KernelKind::rbf, param(p, "gamma", 0.1)}, param(p, "C", 1.0),
                                         param(p, "epsilon", 0.1));
  }
  return nullptr;
}

inline std::unique_ptr<Classifier> make_classifier(ClsKind k, const Params& p) {
  switch (k) {
    case ClsKind::LogRegL2: return std::make_unique<LogisticRegression>(param(p, "C", 1.0));
    case ClsKind::SVM_lin: return std::make_unique<KernelSvc>(Kernel{KernelKind::linear}, param(p, "C", 1.0));
    case ClsKind::SVM_poly:
      return std::make_unique<KernelSvc>(
          Kernel{KernelKind::poly, param(p, "gamma", 0.1), param(p, "degree", 3), param(p, "coef0", 1.0)},
          param(p, "C", 1.0));
    case ClsKind::SVM_rbf:
      return std::make_unique<KernelSvc>(Kernel{KernelKind::rbf, param(p, "gamma", 0.1)}, param(p, "C", 1.0));
  }
  return nullptr;
}

/// Cartesian product of named value lists.
inline std::vector<Params> grid_product(const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
  std::vector<Params> out{Params{}};
  for (const auto& [name, values] : axes) {
    std::vector<Params> next;
    for (const auto& base : out)
      for (double v : values) {
        Params p = base;
        p[name] = v;
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

inline std::vector<Params> default_grid(RegKind k) {
  const auto C = logspace(-2, 3, 6);
  const auto gamma = logspace(-3, 1, 5);
  switch (k) {
    case RegKind::OLS: return {Params{}};
    case RegKind::Ridge: return grid_product({{"lambda", logspace(-4, 2, 7)}});
    case RegKind::ElasticNet: return grid_product({{"alpha", logspace(-4, 2, 7)}, {"l1_ratio", {0.1, 0.5, 0.9}}});
    case RegKind::KNN: return grid_product({{"k", {1, 3, 5, 10, 15, 20, 30}}});
    case RegKind::SVR_lin: return grid_product({{"C", C}});
    case RegKind::SVR_poly: return grid_product({{"C", {0.1, 1, 10}}, {"gamma", {0.01, 0.1}}, {"degree", {2, 3}}});
    case RegKind::SVR_rbf: return grid_product({{"C", C}, {"gamma", gamma}});
  }
  return {Params{}};
}

inline std::vector<Params> default_grid(ClsKind k) {
  const auto C = logspace(-2, 3, 6);
  const auto gamma = logspace(-3, 1, 5);
  switch (k) {
    case ClsKind::LogRegL2: return grid_product({{"C", C}});
    case ClsKind::SVM_lin: return grid_product({{"C", C}});
    case ClsKind::SVM_poly: return grid_product({{"C", {0.1, 1, 10}}, {"gamma", {0.01, 0.1}}, {"degree", {2, 3}}});
    case ClsKind::SVM_rbf: return grid_product({{"C", C}, {"gamma", gamma}});
  }
  return {Params{}};
}

/// Shuffled row folds; fold f holds every row with assignment f.
inline std::vector<int> kfold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  rng.shuffle(order.begin(), order.end());
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return fold;
}

struct CvEntry {
  Params params;
  double score = 0.0;  // mean over folds
};

template <typename Model>
struct FitResult {
  std::unique_ptr<Model> model;
  Params best;
  double cv_score = 0.0;
  std::vector<CvEntry> table;
};

inline std::string params_str(const Params& p) {
  std::string s;
  for (const auto& [k, v] : p) {
    if (!s.empty()) s += " ";
    s += k + "=" + fmt_double(v);
  }
  return s;
}

/// Grid search by k-fold CV minimizing MSE on the (transformed) target
/// scale, then refits on all rows with the best parameters.
inline FitResult<Regressor> fit_regression(RegKind kind, const Eigen::MatrixXd& X, const Vector& y,
                                           std::vector<Params> grid, int folds, std::uint64_t seed,
                                           unsigned threads = 1) {
  if (grid.empty()) grid = default_grid(kind);
  const auto n = static_cast<std::size_t>(X.rows());
  folds = std::clamp<int>(folds, 2, static_cast<int>(std::max<std::size_t>(2, n)));
  const auto assign = kfold_assignment(n, folds, seed);
  FitResult<Regressor> res;
  res.table.resize(grid.size());
  const std::size_t tasks = grid.size() * static_cast<std::size_t>(folds);
  std::vector<double> fold_scores(tasks, 0.0);
  parallel_for(tasks, threads, [&](std::size_t t) {
    const std::size_t g = t / static_cast<std::size_t>(folds);
    const int f = static_cast<int>(t % static_cast<std::size_t>(folds));
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < n; ++i) (assign[i] == f ? va : tr).push_back(i);
    auto m = make_regressor(kind, grid[g]);
    m->fit(take_rows(X, tr), take_rows(y, tr));
    fold_scores[t] = regression_metrics(m->predict(take_rows(X, va)), take_rows(y, va)).mse;
  });
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (int f = 0; f < folds; ++f) s += fold_scores[g * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)];
    res.table[g] = {grid[g], s / folds};
    if (res.table[g].score < res.table[best].score) best = g;
  }
  res.best = grid[best];
  res.cv_score = res.table[best].score;
  res.model = make_regressor(kind, res.best);
  res.model->fit(X, y);
  return res;
}

/// Grid search by k-fold CV maximizing average recall with balanced class
/// weights, then refits on all rows.
inline FitResult<Classifier> fit_classifier(ClsKind kind, const Eigen::MatrixXd& X, const Vector& y,
                                            std::vector<Params> grid, int folds, std::uint64_t seed,
                                            unsigned threads = 1, bool balanced = true) {
  if (grid.empty()) grid = default_grid(kind);
  balanced_weights(y);  // rejects single-class targets
  const auto n = static_cast<std::size_t>(X.rows());
  folds = std::clamp<int>(folds, 2, static_cast<int>(std::max<std::size_t>(2, n)));
  const auto assign = kfold_assignment(n, folds, seed);
  FitResult<Classifier> res;
  res.table.resize(grid.size());
  const std::size_t tasks = grid.size() * static_cast<std::size_t>(folds);
  std::vector<double> fold_scores(tasks, 0.0);
  parallel_for(tasks, threads, [&](std::size_t t) {
    const std::size_t g = t / static_cast<std::size_t>(folds);
    const int f = static_cast<int>(t % static_cast<std::size_t>(folds));
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < n; ++i) (assign[i] == f ? va : tr).push_back(i);
    const Vector ytr = take_rows(y, tr);
    double n1 = ytr.sum();
    if (n1 == 0 || n1 == static_cast<double>(ytr.size())) {
      fold_scores[t] = 0.5;  // degenerate fold predicts one class
      return;
    }
    auto m = make_classifier(kind, grid[g]);
    m->fit(take_rows(X, tr), ytr, balanced ? row_weights(ytr, balanced_weights(ytr)) : Vector());
    const auto rep = evaluate_classifier(m->predict(take_rows(X, va)), to_labels(take_rows(y, va)));
    fold_scores[t] = rep.average_recall.value_or(rep.accuracy);
  });
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (int f = 0; f < folds; ++f) s += fold_scores[g * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)];
    res.table[g] = {grid[g], s / folds};
    if (res.table[g].score > res.table[best].score) best = g;
  }
  res.best = grid[best];
  res.cv_score = res.table[best].score;
  res.model = make_classifier(kind, res.best);
  res.model->fit(X, y, balanced ? row_weights(y, balanced_weights(y)) : Vector());
  return res;
}

}  // namespace migcdr
