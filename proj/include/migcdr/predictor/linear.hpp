#pragma once
// OLS, ridge, elastic net, k-nearest-neighbour regression and L2 logistic
// regression. All fit an unpenalized intercept.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "migcdr/predictor/features.hpp"
#include "migcdr/util/support.hpp"

namespace migcdr {

using Params = std::map<std::string, double>;

inline double param(const Params& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual void fit(const Eigen::MatrixXd& X, const Vector& y) = 0;
  virtual Vector predict(const Eigen::MatrixXd& X) const = 0;
  virtual std::string name() const = 0;
  bool flagged = false;  // numerical fallback was used
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  /// y holds 0/1 labels; w per-row weights (empty = all 1).
  virtual void fit(const Eigen::MatrixXd& X, const Vector& y, const Vector& w) = 0;
  /// Positive values predict class 1.
  virtual Vector decision(const Eigen::MatrixXd& X) const = 0;
  virtual std::string name() const = 0;

  std::vector<int> predict(const Eigen::MatrixXd& X) const {
    const Vector d = decision(X);
    std::vector<int> out(static_cast<std::size_t>(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i) out[static_cast<std::size_t>(i)] = d(i) > 0.0 ? 1 : 0;
    return out;
  }
};

/// Balanced class weights n / (2 n_c) as {w0, w1}.
inline std::array<double, 2> balanced_weights(const Vector& y) {
  double n1 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) n1 += y(i) > 0.5;
  const double n = static_cast<double>(y.size()), n0 = n - n1;
  if (n0 == 0 || n1 == 0) throw ParameterError("classifier fit: training target has a single class");
  return {n / (2.0 * n0), n / (2.0 * n1)};
}

inline Vector row_weights(const Vector& y, std::array<double, 2> w) {
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out(i) = y(i) > 0.5 ? w[1] : w[0];
  return out;
}

/// Linear model y = b + X beta fitted by the normal equations with an
/// optional ridge penalty on beta.
class LinearRegression : public Regressor {
 public:
  explicit LinearRegression(double lambda = 0.0) : lambda_(lambda) {}

  void fit(const Eigen::MatrixXd& X, const Vector& y) override {
    const Vector xm = X.colwise().mean().transpose();
    const double ym = y.mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xm.transpose();
    const Vector yc = y.array() - ym;
    Eigen::MatrixXd A = Xc.transpose() * Xc;
    const Vector rhs = Xc.transpose() * yc;
    double lambda = lambda_;
    if (lambda <= 0.0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
      const double top = es.eigenvalues().size() ? es.eigenvalues().maxCoeff() : 0.0;
      const double low = es.eigenvalues().size() ? es.eigenvalues().minCoeff() : 0.0;
      if (A.rows() > 0 && (top <= 0.0 || low <= 1e-12 * top)) {
        lambda = 1e-8;
        flagged = true;
        log_warn("OLS: singular normal matrix, using ridge jitter 1e-8");
      }
    }
    A.diagonal().array() += lambda;
    beta_ = A.rows() ? Vector(A.ldlt().solve(rhs)) : Vector();
    intercept_ = ym - (A.rows() ? xm.dot(beta_) : 0.0);
  }

  Vector predict(const Eigen::MatrixXd& X) const override {
    return (X * beta_).array() + intercept_;
  }

  std::string name() const override { return lambda_ > 0.0 ? "Ridge" : "OLS"; }
  const Vector& coef() const { return beta_; }
  double intercept() const { return intercept_; }

 private:
  double lambda_;
  Vector beta_;
  double intercept_ = 0.0;
};

inline double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

/// Minimizes 1/(2n)|y - b - X beta|^2 + alpha*rho*|beta|_1 + alpha*(1-rho)/2*|beta|^2
/// by cyclic coordinate descent.
class ElasticNet : public Regressor {
 public:
  ElasticNet(double alpha, double l1_ratio, double tol = 1e-6, int max_iter = 100000)
      : alpha_(alpha), rho_(l1_ratio), tol_(tol), max_iter_(max_iter) {}

  void fit(const Eigen::MatrixXd& X, const Vector& y) override {
    const double n = static_cast<double>(X.rows());
    const Vector xm = X.colwise().mean().transpose();
    const double ym = y.mean();
    const Eigen::MatrixXd Xc = X.rowwise() - xm.transpose();
    Vector r = y.array() - ym;
    beta_ = Vector::Zero(X.cols());
    const Vector sq = Xc.colwise().squaredNorm().transpose() / n;
    const double l1 = alpha_ * rho_, l2 = alpha_ * (1.0 - rho_);
    for (iterations_ = 0; iterations_ < max_iter_; ++iterations_) {
      double max_step = 0.0, max_beta = 0.0;
      for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (sq(j) == 0.0) continue;
        const double old = beta_(j);
        const double z = Xc.col(j).dot(r) / n + sq(j) * old;
        const double nb = soft_threshold(z, l1) / (sq(j) + l2);
        if (nb != old) {
          r -= Xc.col(j) * (nb - old);
          beta_(j) = nb;
        }
        max_step = std::max(max_step, std::abs(nb - old));
        max_beta = std::max(max_beta, std::abs(nb));
      }
      if (max_step <= tol_) break;
    }
    if (iterations_ >= max_iter_) {
      flagged = true;
      log_warn("ElasticNet: coordinate descent hit the iteration cap");
    }
    intercept_ = ym - xm.dot(beta_);
  }

  Vector predict(const Eigen::MatrixXd& X) const override { return (X * beta_).array() + intercept_; }
  std::string name() const override { return "ElasticNet"; }
  const Vector& coef() const { return beta_; }
  double intercept() const { return intercept_; }
  int iterations() const { return iterations_; }

 private:
  double alpha_, rho_, tol_;
  int max_iter_;
  Vector beta_;
  double intercept_ = 0.0;
  int iterations_ = 0;
};

/// Uniform-weight k-nearest-neighbour regression by brute force; distance
/// ties go to the lower training index.
class KnnRegressor : public Regressor {
 public:
  explicit KnnRegressor(int k) : k_(k) {}

  void fit(const Eigen::MatrixXd& X, const Vector& y) override {
    if (X.rows() == 0) throw ParameterError("KNN: empty training set");
    X_ = X;
    y_ = y;
  }

  Vector predict(const Eigen::MatrixXd& X) const override {
    const auto k = static_cast<std::size_t>(std::clamp<Eigen::Index>(k_, 1, X_.rows()));
    Vector out(X.rows());
    std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(X_.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index j = 0; j < X_.rows(); ++j) d[static_cast<std::size_t>(j)] = {(X_.row(j) - X.row(i)).squaredNorm(), j};
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += y_(d[q].second);
      out(i) = s / static_cast<double>(k);
    }
    return out;
  }

  std::string name() const override { return "KNN"; }

 private:
  int k_;
  Eigen::MatrixXd X_;
  Vector y_;
};

/// Weighted L2 logistic regression:
///   minimize  sum_i w_i log(1 + exp(-s_i (b + x_i.beta))) + |beta|^2 / (2C)
/// with s_i = +1 for class 1 and -1 for class 0, solved by damped Newton.
class LogisticRegression : public Classifier {
 public:
  explicit LogisticRegression(double C = 1.0, double tol = 1e-10, int max_iter = 100) : C_(C), tol_(tol), max_iter_(max_iter) {}

  /// Objective value at parameters theta = (b, beta).
  double objective(const Eigen::MatrixXd& X, const Vector& y, const Vector& w, const Vector& theta) const {
    double f = theta.tail(theta.size() - 1).squaredNorm() / (2.0 * C_);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double s = y(i) > 0.5 ? 1.0 : -1.0;
      const double z = s * (theta(0) + X.row(i).dot(theta.tail(theta.size() - 1)));
      f += wt(w, i) * (z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)));
    }
    return f;
  }

  Vector gradient(const Eigen::MatrixXd& X, const Vector& y, const Vector& w, const Vector& theta) const {
    Vector g = Vector::Zero(theta.size());
    g.tail(g.size() - 1) = theta.tail(theta.size() - 1) / C_;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double s = y(i) > 0.5 ? 1.0 : -1.0;
      const double z = s * (theta(0) + X.row(i).dot(theta.tail(theta.size() - 1)));
      const double c = -wt(w, i) * s / (1.0 + std::exp(z));
      g(0) += c;
      g.tail(g.size() - 1) += c * X.row(i).transpose();
    }
    return g;
  }

  void fit(const Eigen::MatrixXd& X, const Vector& y, const Vector& w) override {
    const Eigen::Index p = X.cols() + 1;
    Eigen::MatrixXd Xa(X.rows(), p);
    Xa.col(0).setOnes();
    Xa.rightCols(X.cols()) = X;
    Vector theta = Vector::Zero(p);
    double f = objective(X, y, w, theta);
    for (iterations_ = 0; iterations_ < max_iter_; ++iterations_) {
      const Vector g = gradient(X, y, w, theta);
      if (g.lpNorm<Eigen::Infinity>() < tol_) break;
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double eta = theta.dot(Xa.row(i).transpose());
        const double pr = 1.0 / (1.0 + std::exp(-eta));
        H.noalias() += wt(w, i) * pr * (1.0 - pr) * Xa.row(i).transpose() * Xa.row(i);
      }
      H.diagonal().tail(p - 1).array() += 1.0 / C_;
      H(0, 0) += 1e-12;
      const Vector step = H.ldlt().solve(g);
      double t = 1.0;
      Vector next = theta - step;
      double fn = objective(X, y, w, next);
      while (fn > f - 1e-4 * t * g.dot(step) && t > 1e-10) {
        t *= 0.5;
        next = theta - t * step;
        fn = objective(X, y, w, next);
      }
      if (!(fn <= f)) break;
      theta = next;
      f = fn;
    }
    intercept_ = theta(0);
    beta_ = theta.tail(p - 1);
  }

  Vector decision(const Eigen::MatrixXd& X) const override { return (X * beta_).array() + intercept_; }
  std::string name() const override { return "LogReg"; }
  const Vector& coef() const { return beta_; }
  double intercept() const { return intercept_; }
  int iterations() const { return iterations_; }

 private:
  static double wt(const Vector& w, Eigen::Index i) { return w.size() ? w(i) : 1.0; }

  double C_, tol_;
  int max_iter_;
  Vector beta_;
  double intercept_ = 0.0;
  int iterations_ = 0;
};

}  // namespace migcdr
