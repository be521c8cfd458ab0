#include <gtest/gtest.h>

#include <numeric>

#include "migcdr/predictor/evaluation.hpp"
#include "migcdr/predictor/model_selection.hpp"

using namespace migcdr;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

Vector linear_target(Rng& rng, const Eigen::MatrixXd& X, double noise) {
  Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    y(i) = 0.7;
    for (Eigen::Index j = 0; j < X.cols(); ++j) y(i) += (j % 2 ? -1.0 : 1.0) * (1.0 + 0.5 * j) * X(i, j);
    y(i) += noise * rng.normal();
  }
  return y;
}

// Ridge with free intercept as one least-squares problem on [1 X; 0 sqrt(l) I].
Vector ridge_qr_oracle(const Eigen::MatrixXd& X, const Vector& y, double lambda) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + p, p + 1);
  A.topLeftCorner(n, 1).setOnes();
  A.topRightCorner(n, p) = X;
  A.bottomRightCorner(p, p) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(p, p);
  Vector b = Vector::Zero(n + p);
  b.head(n) = y;
  return A.colPivHouseholderQr().solve(b);
}

// Elastic net by proximal gradient (ISTA) on (b, beta) jointly.
Vector elastic_net_ista(const Eigen::MatrixXd& X, const Vector& y, double alpha, double rho) {
  const double n = static_cast<double>(X.rows());
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A.transpose() * A / n).eigenvalues().maxCoeff() +
                   alpha * (1.0 - rho);
  Vector th = Vector::Zero(X.cols() + 1);
  for (int it = 0; it < 200000; ++it) {
    Vector g = A.transpose() * (A * th - y) / n;
    g.tail(X.cols()) += alpha * (1.0 - rho) * th.tail(X.cols());
    Vector next = th - g / L;
    for (Eigen::Index j = 1; j < next.size(); ++j) {
      const double t = alpha * rho / L;
      next(j) = next(j) > t ? next(j) - t : (next(j) < -t ? next(j) + t : 0.0);
    }
    const double step = (next - th).lpNorm<Eigen::Infinity>();
    th = next;
    if (step < 1e-14) break;
  }
  return th;
}

Vector labels_from(const Eigen::MatrixXd& X, Rng& rng, double flip) {
  Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = (X(i, 0) - 0.5 * X(i, 1) + 0.3 > 0) != rng.bernoulli(flip) ? 1.0 : 0.0;
  return y;
}

}  // namespace

TEST(LinearRegression, OlsAndRidgeMatchQrOracle) {
  Rng rng(1);
  const Eigen::MatrixXd X = random_matrix(rng, 40, 4);
  const Vector y = linear_target(rng, X, 0.3);
  for (double lambda : {0.0, 0.5, 10.0}) {
    LinearRegression m(lambda);
    m.fit(X, y);
    const Vector want = ridge_qr_oracle(X, y, lambda);
    EXPECT_NEAR(m.intercept(), want(0), 1e-10);
    EXPECT_LT((m.coef() - want.tail(4)).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_FALSE(m.flagged);
  }
}

TEST(LinearRegression, CollinearDesignIsFlaggedNotFatal) {
  Rng rng(2);
  Eigen::MatrixXd X = random_matrix(rng, 30, 2);
  X.col(1) = X.col(0);
  const Vector y = X.col(0) * 2.0;
  LinearRegression m;
  m.fit(X, y);
  EXPECT_TRUE(m.flagged);
  EXPECT_NEAR(m.coef().sum(), 2.0, 1e-6);
}

TEST(ElasticNet, MatchesProximalGradientOracle) {
  Rng rng(3);
  const Eigen::MatrixXd X = random_matrix(rng, 20, 5);
  const Vector y = linear_target(rng, X, 0.5);
  for (auto [alpha, rho] : {std::pair{0.1, 0.5}, {0.5, 0.9}, {0.01, 0.1}}) {
    ElasticNet m(alpha, rho, 1e-12);
    m.fit(X, y);
    const Vector want = elastic_net_ista(X, y, alpha, rho);
    EXPECT_NEAR(m.intercept(), want(0), 1e-4);
    EXPECT_LT((m.coef() - want.tail(5)).lpNorm<Eigen::Infinity>(), 1e-4);
  }
}

TEST(ElasticNet, LargePenaltyZeroesEveryCoefficient) {
  Rng rng(4);
  const Eigen::MatrixXd X = random_matrix(rng, 50, 3);
  const Vector y = linear_target(rng, X, 0.1);
  ElasticNet m(1e3, 0.9);
  m.fit(X, y);
  EXPECT_EQ(m.coef().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(m.intercept(), y.mean(), 1e-12);
}

TEST(Knn, MatchesFullSortOracle) {
  Rng rng(5);
  const Eigen::MatrixXd X = random_matrix(rng, 60, 3), Q = random_matrix(rng, 25, 3);
  const Vector y = linear_target(rng, X, 1.0);
  for (int k : {1, 3, 7}) {
    KnnRegressor m(k);
    m.fit(X, y);
    const Vector got = m.predict(Q);
    for (Eigen::Index i = 0; i < Q.rows(); ++i) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
        return (X.row(a) - Q.row(i)).squaredNorm() < (X.row(b) - Q.row(i)).squaredNorm();
      });
      double s = 0;
      for (int q = 0; q < k; ++q) s += y(idx[static_cast<std::size_t>(q)]);
      EXPECT_NEAR(got(i), s / k, 1e-12);
    }
  }
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const Eigen::MatrixXd X = random_matrix(rng, 50, 3);
  const Vector y = labels_from(X, rng, 0.2);
  Vector w(50);
  for (auto& v : w) v = rng.uniform(0.5, 2.0);
  const LogisticRegression m(0.7);
  for (int trial = 0; trial < 10; ++trial) {
    Vector th(4);
    for (auto& v : th) v = rng.normal();
    const Vector g = m.gradient(X, y, w, th);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double h = 1e-6;
      Vector a = th, b = th;
      a(j) += h;
      b(j) -= h;
      const double fd = (m.objective(X, y, w, a) - m.objective(X, y, w, b)) / (2 * h);
      EXPECT_NEAR(g(j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Logistic, FitReachesStationaryPoint) {
  Rng rng(7);
  const Eigen::MatrixXd X = random_matrix(rng, 200, 2);
  const Vector y = labels_from(X, rng, 0.15);
  LogisticRegression m(1.0);
  m.fit(X, y, Vector());
  Vector th(3);
  th << m.intercept(), m.coef();
  EXPECT_LT(m.gradient(X, y, Vector(), th).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(Logistic, BalancedWeightsEqualMinorityDuplication) {
  // With one class exactly half the size of the other, weights {n/(2 n0), n/(2 n1)}
  // are proportional to {1, 2}: same optimum as duplicating minority rows
  // once the L2 strength is rescaled by the same factor.
  Rng rng(8);
  const Eigen::MatrixXd X0 = random_matrix(rng, 40, 2), X1 = random_matrix(rng, 20, 2);
  Eigen::MatrixXd X(60, 2);
  X << X0, (X1.array() + 0.8).matrix();
  Vector y(60);
  y << Vector::Zero(40), Vector::Ones(20);
  const auto bw = balanced_weights(y);
  EXPECT_DOUBLE_EQ(bw[0], 0.75);
  EXPECT_DOUBLE_EQ(bw[1], 1.5);
  const double C = 2.0;
  LogisticRegression weighted(C);
  weighted.fit(X, y, row_weights(y, bw));

  Eigen::MatrixXd Xd(80, 2);
  Xd << X, X.bottomRows(20);
  Vector yd(80);
  yd << y, Vector::Ones(20);
  LogisticRegression dup(C * bw[0]);
  dup.fit(Xd, yd, Vector());

  const Eigen::MatrixXd Q = random_matrix(rng, 30, 2);
  EXPECT_LT((weighted.decision(Q) - dup.decision(Q)).lpNorm<Eigen::Infinity>(), 1e-4);
}

TEST(BalancedWeights, SingleClassRejected) {
  EXPECT_THROW(balanced_weights(Vector::Ones(5)), ParameterError);
}

TEST(Svc, SeparatesSeparableData) {
  Rng rng(9);
  Eigen::MatrixXd X(80, 2);
  Vector y(80);
  for (Eigen::Index i = 0; i < 80; ++i) {
    y(i) = i % 2;
    X.row(i) << rng.normal() * 0.5 + (y(i) ? 2.5 : -2.5), rng.normal();
  }
  for (KernelKind kind : {KernelKind::linear, KernelKind::poly, KernelKind::rbf}) {
    KernelSvc m(Kernel{kind, 0.5}, 10.0);
    m.fit(X, y, Vector());
    EXPECT_TRUE(m.converged);
    const auto pred = m.predict(X);
    EXPECT_EQ(evaluate_classifier(pred, to_labels(y)).accuracy, 1.0) << m.name();
    EXPECT_LT(m.support_vectors(), 40);
  }
}

TEST(Svc, LinearDecisionSatisfiesMarginOnSupportVectors) {
  // Hard-margin toy: points at x = -1 and x = +1 give f(x) = x.
  Eigen::MatrixXd X(4, 1);
  X << -2, -1, 1, 2;
  Vector y(4);
  y << 0, 0, 1, 1;
  KernelSvc m(Kernel{KernelKind::linear}, 1e3, 1e-8);
  m.fit(X, y, Vector());
  Eigen::MatrixXd Q(3, 1);
  Q << -1, 0, 1;
  const Vector d = m.decision(Q);
  EXPECT_NEAR(d(0), -1.0, 1e-6);
  EXPECT_NEAR(d(1), 0.0, 1e-6);
  EXPECT_NEAR(d(2), 1.0, 1e-6);
  EXPECT_EQ(m.support_vectors(), 2);
}

TEST(Svr, LinearFitWithinTube) {
  Rng rng(10);
  Eigen::MatrixXd X(60, 1);
  Vector y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    X(i, 0) = rng.uniform(-2, 2);
    y(i) = 2.0 * X(i, 0) + 1.0 + rng.uniform(-0.05, 0.05);
  }
  KernelSvr m(Kernel{KernelKind::linear}, 100.0, 0.1, 1e-6);
  m.fit(X, y);
  EXPECT_FALSE(m.flagged);
  EXPECT_LT((m.predict(X) - y).cwiseAbs().maxCoeff(), 0.1 + 1e-3);
  Eigen::MatrixXd Q(2, 1);
  Q << -1.5, 1.5;
  const Vector q = m.predict(Q);
  EXPECT_NEAR(q(0), -2.0, 0.15);
  EXPECT_NEAR(q(1), 4.0, 0.15);
}

TEST(Transforms, DocumentedClipValues) {
  EXPECT_NEAR(logit_transform(0.0), -6.9068, 1e-4);
  EXPECT_NEAR(log_transform(0.0), -2.3026, 1e-4);
  bool clipped = false;
  EXPECT_NEAR(logit_transform(1.0, &clipped), 6.9068, 1e-4);
  EXPECT_TRUE(clipped);
  for (Transform t : {Transform::log, Transform::logit})
    for (double v : {0.2, 0.5, 0.9}) EXPECT_NEAR(inverse_transform(t, apply_transform(t, v)), v, 1e-14);
}

TEST(TransformSpec, RejectsInvalidCombinations) {
  TransformSpec s;
  s.feature_transform[static_cast<int>(FeatureId::gender_ego)] = Transform::log;
  EXPECT_THROW(s.validate(), ParameterError);
  TransformSpec c = TransformSpec::default_for(Target::decay_count);
  c.target_transform = Transform::log;
  EXPECT_THROW(c.validate(), ParameterError);
  EXPECT_NO_THROW(TransformSpec::default_for(Target::count_post).validate());
}

TEST(ClassifierMetrics, DocumentedConfusion) {
  std::vector<int> truth, pred;
  auto add = [&](int t, int p, int n) {
    for (int i = 0; i < n; ++i) truth.push_back(t), pred.push_back(p);
  };
  add(1, 1, 7);
  add(1, 0, 3);
  add(0, 0, 6);
  add(0, 1, 4);
  const auto r = evaluate_classifier(pred, truth);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.65);
  EXPECT_DOUBLE_EQ(*r.recall[1], 0.7);
  EXPECT_DOUBLE_EQ(*r.recall[0], 0.6);
  EXPECT_DOUBLE_EQ(*r.average_recall, 0.65);
  EXPECT_DOUBLE_EQ(*r.precision[1], 7.0 / 11.0);
}

TEST(ClassifierMetrics, AbsentClassLeavesRecallUndefined) {
  const std::vector<int> truth{1, 1, 1}, pred{1, 0, 1};
  const auto r = evaluate_classifier(pred, truth);
  EXPECT_FALSE(r.recall[0].has_value());
  EXPECT_FALSE(r.average_recall.has_value());
}

TEST(RegressionMetrics, BackTransformBeforeScoring) {
  Vector y(4), p(4);
  y << 1, 2, 4, 8;
  p << 2, 2, 4, 4;
  Vector ly = y.array().log(), lp = p.array().log();
  const auto r = evaluate_regression(lp, ly, Transform::log);
  EXPECT_NEAR(r.mse, (1.0 + 0 + 0 + 16.0) / 4.0, 1e-12);
  EXPECT_NEAR(*r.r2, 1.0 - 17.0 / 28.75, 1e-12);
  const auto o = evaluate_regression_original(lp, y, Transform::log);
  EXPECT_NEAR(o.mse, r.mse, 1e-12);
  EXPECT_FALSE(regression_metrics(p, Vector::Constant(4, 3.0)).r2.has_value());
}

TEST(KFold, BalancedAndDeterministic) {
  for (std::size_t n : {10u, 23u, 100u}) {
    const auto a = kfold_assignment(n, 5, 3);
    EXPECT_EQ(a, kfold_assignment(n, 5, 3));
    std::array<std::size_t, 5> sizes{};
    for (int f : a) ++sizes[static_cast<std::size_t>(f)];
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
  }
}

TEST(ModelSelection, GridSearchIsThreadInvariant) {
  Rng rng(11);
  const Eigen::MatrixXd X = random_matrix(rng, 80, 3);
  const Vector y = linear_target(rng, X, 0.5);
  const auto a = fit_regression(RegKind::Ridge, X, y, {}, 5, 2, 1);
  const auto b = fit_regression(RegKind::Ridge, X, y, {}, 5, 2, 2);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.cv_score, b.cv_score);
  ASSERT_EQ(a.table.size(), 7u);
  for (const auto& e : a.table) EXPECT_GE(e.score, a.cv_score);
  EXPECT_EQ(params_str(Params{{"C", 1.0}, {"gamma", 0.1}}), "C=1 gamma=0.1");
}

TEST(ModelSelection, ClassifierImprovesOnChance) {
  Rng rng(12);
  const Eigen::MatrixXd X = random_matrix(rng, 150, 2);
  const Vector y = labels_from(X, rng, 0.1);
  const auto r = fit_classifier(ClsKind::LogRegL2, X, y, {}, 5, 4);
  EXPECT_GT(r.cv_score, 0.75);
}

TEST(PermutationImportance, OnlyUsedFeatureMatters) {
  Rng rng(13);
  const Eigen::MatrixXd X = random_matrix(rng, 300, 2);
  const Vector y = 3.0 * X.col(0);
  auto score = [&](const Eigen::MatrixXd& Z) { return regression_metrics(3.0 * Z.col(0), y).mse; };
  const auto imp = permutation_importance(score, X, {{0}, {1}}, {"used", "unused"}, true, 10, 1);
  EXPECT_GT(imp[0].mean, 10.0);
  EXPECT_EQ(imp[1].mean, 0.0);
  EXPECT_EQ(imp[1].sd, 0.0);
  EXPECT_EQ(imp[0].drops.size(), 10u);
}

TEST(BayesBound, HandComputedLeaveOneOut) {
  Eigen::MatrixXd X(5, 1);
  X << 0, 1, 10, 11, 12;
  const std::vector<int> y{0, 1, 1, 1, 1};
  // nearest neighbours: 0->1 (wrong), 1->0 (wrong), the rest right
  const auto b = bayes_accuracy_upper_bound(X, y);
  EXPECT_DOUBLE_EQ(b.loo_error, 0.4);
  EXPECT_DOUBLE_EQ(b.bound, 0.8);

  Eigen::MatrixXd D(3, 1);
  D << 5, 5, 9;
  const auto c = bayes_accuracy_upper_bound(D, std::vector<int>{0, 1, 1});
  EXPECT_EQ(c.conflicting_duplicates, 2u);
}

TEST(Scaler, TrainStatisticsStandardize) {
  Rng rng(14);
  Eigen::MatrixXd X = random_matrix(rng, 100, 3);
  X.col(2).setConstant(4.0);
  const Scaler s = Scaler::fit(X);
  const Eigen::MatrixXd Z = s.apply(X);
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(Z.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(Z.col(j).squaredNorm() / 100.0, 1.0, 1e-12);
  }
  EXPECT_EQ(s.sd(2), 1.0);
  EXPECT_EQ(Z.col(2).cwiseAbs().maxCoeff(), 0.0);
}
