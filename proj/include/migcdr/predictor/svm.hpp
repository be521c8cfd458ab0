#pragma once
// Kernel SVM for classification (weighted C-SVC) and epsilon-SVR, trained
// by an SMO dual solver with second-order working-set selection.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "migcdr/predictor/linear.hpp"

namespace migcdr {

enum class KernelKind : int { linear, poly, rbf };

inline const char* kernel_name(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "lin";
    case KernelKind::poly: return "poly";
    case KernelKind::rbf: return "rbf";
  }
  return "?";
}

struct Kernel {
  KernelKind kind = KernelKind::rbf;
  double gamma = 0.1;
  double degree = 3;
  double coef0 = 1.0;

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
    switch (kind) {
      case KernelKind::linear: return a.dot(b);
      case KernelKind::poly: return std::pow(gamma * a.dot(b) + coef0, degree);
      case KernelKind::rbf: return std::exp(-gamma * (a - b).squaredNorm());
    }
    return 0.0;
  }

  Eigen::MatrixXd gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
    Eigen::MatrixXd K = A * B.transpose();
    switch (kind) {
      case KernelKind::linear: break;
      case KernelKind::poly: K = (gamma * K.array() + coef0).pow(degree).matrix(); break;
      case KernelKind::rbf: {
        const Eigen::VectorXd an = A.rowwise().squaredNorm();
        const Eigen::VectorXd bn = B.rowwise().squaredNorm();
        for (Eigen::Index i = 0; i < K.rows(); ++i)
          for (Eigen::Index j = 0; j < K.cols(); ++j)
            K(i, j) = std::exp(-gamma * std::max(0.0, an(i) + bn(j) - 2.0 * K(i, j)));
        break;
      }
    }
    return K;
  }
};

struct SmoResult {
  Vector alpha;
  double rho = 0.0;
  long iterations = 0;
  bool converged = true;
};

/// Solves  min 1/2 a'Qa + p'a  s.t.  y'a = const, 0 <= a_i <= C_i  where
/// Q_ij = y_i y_j K(map_i, map_j). `map` lets several dual variables share a
/// kernel row (epsilon-SVR uses two per sample).
inline SmoResult smo_solve(const Eigen::MatrixXd& K, const std::vector<int>& map, const Vector& p, const Vector& y,
                           const Vector& C, double eps = 1e-3, long max_iter = 0) {
  const auto l = static_cast<Eigen::Index>(map.size());
  if (max_iter <= 0) max_iter = std::max<long>(1000000, 100 * static_cast<long>(l));
  SmoResult res;
  res.alpha = Vector::Zero(l);
  Vector& a = res.alpha;
  Vector G = p;
  auto q = [&](Eigen::Index i, Eigen::Index j) { return y(i) * y(j) * K(map[static_cast<std::size_t>(i)], map[static_cast<std::size_t>(j)]); };
  auto up = [&](Eigen::Index t) { return (y(t) > 0 && a(t) < C(t)) || (y(t) < 0 && a(t) > 0); };
  auto low = [&](Eigen::Index t) { return (y(t) > 0 && a(t) > 0) || (y(t) < 0 && a(t) < C(t)); };
  constexpr double tau = 1e-12;
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < l; ++t)
      if (up(t) && -y(t) * G(t) >= gmax) {
        if (-y(t) * G(t) > gmax || i < 0) i = t;
        gmax = -y(t) * G(t);
      }
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < l; ++t) {
      if (!low(t)) continue;
      const double v = -y(t) * G(t);
      gmin = std::min(gmin, v);
      if (i < 0) continue;
      const double b = gmax - v;
      if (b > 0) {
        double aa = q(i, i) + q(t, t) - 2.0 * y(i) * y(t) * q(i, t);
        if (aa <= 0) aa = tau;
        if (-(b * b) / aa < best) {
          best = -(b * b) / aa;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < eps) break;
    const double Ci = C(i), Cj = C(j);
    const double oi = a(i), oj = a(j);
    if (y(i) != y(j)) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = a(i) - a(j);
      a(i) += delta;
      a(j) += delta;
      if (diff > 0) {
        if (a(j) < 0) { a(j) = 0; a(i) = diff; }
      } else {
        if (a(i) < 0) { a(i) = 0; a(j) = -diff; }
      }
      if (diff > Ci - Cj) {
        if (a(i) > Ci) { a(i) = Ci; a(j) = Ci - diff; }
      } else {
        if (a(j) > Cj) { a(j) = Cj; a(i) = Cj + diff; }
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0) quad = tau;
      const double delta = (G(i) - G(j)) / quad;
      const double sum = a(i) + a(j);
      a(i) -= delta;
      a(j) += delta;
      if (sum > Ci) {
        if (a(i) > Ci) { a(i) = Ci; a(j) = sum - Ci; }
      } else {
        if (a(j) < 0) { a(j) = 0; a(i) = sum; }
      }
      if (sum > Cj) {
        if (a(j) > Cj) { a(j) = Cj; a(i) = sum - Cj; }
      } else {
        if (a(i) < 0) { a(i) = 0; a(j) = sum; }
      }
    }
    const double di = a(i) - oi, dj = a(j) - oj;
    for (Eigen::Index t = 0; t < l; ++t) G(t) += q(t, i) * di + q(t, j) * dj;
  }
  if (res.iterations >= max_iter) {
    res.converged = false;
    log_warn("SMO: iteration cap reached before convergence");
  }
  // rho: mean of y_i G_i over free variables, else midpoint of the feasible range
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity(), sum = 0.0;
  int nfree = 0;
  for (Eigen::Index t = 0; t < l; ++t) {
    const double yg = y(t) * G(t);
    const bool at_upper = a(t) >= C(t), at_lower = a(t) <= 0;
    if (at_upper) {
      if (y(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (at_lower) {
      if (y(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++nfree;
      sum += yg;
    }
  }
  res.rho = nfree > 0 ? sum / nfree : (std::isfinite(ub) && std::isfinite(lb) ? (ub + lb) / 2 : (std::isfinite(ub) ? ub : lb));
  if (!std::isfinite(res.rho)) res.rho = 0.0;
  return res;
}

/// Weighted soft-margin kernel SVM; per-row weights scale C.
class KernelSvc : public Classifier {
 public:
  KernelSvc(Kernel k, double C, double eps = 1e-3) : kernel_(k), C_(C), eps_(eps) {}

  void fit(const Eigen::MatrixXd& X, const Vector& y, const Vector& w) override {
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd K = kernel_.gram(X, X);
    std::vector<int> map(static_cast<std::size_t>(n));
    Vector s(n), C(n), p = Vector::Constant(n, -1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      map[static_cast<std::size_t>(i)] = static_cast<int>(i);
      s(i) = y(i) > 0.5 ? 1.0 : -1.0;
      C(i) = C_ * (w.size() ? w(i) : 1.0);
    }
    const SmoResult r = smo_solve(K, map, p, s, C, eps_);
    converged = r.converged;
    rho_ = r.rho;
    sv_.resize(0, X.cols());
    coef_.resize(0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
      if (r.alpha(i) > 0) keep.push_back(i);
    sv_.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
    coef_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t q = 0; q < keep.size(); ++q) {
      sv_.row(static_cast<Eigen::Index>(q)) = X.row(keep[q]);
      coef_(static_cast<Eigen::Index>(q)) = r.alpha(keep[q]) * s(keep[q]);
    }
  }

  Vector decision(const Eigen::MatrixXd& X) const override {
    if (sv_.rows() == 0) return Vector::Constant(X.rows(), -rho_);
    return (kernel_.gram(X, sv_) * coef_).array() - rho_;
  }

  std::string name() const override { return std::string("SVM-") + kernel_name(kernel_.kind); }
  Eigen::Index support_vectors() const { return sv_.rows(); }
  bool converged = true;

 private:
  Kernel kernel_;
  double C_, eps_;
  Eigen::MatrixXd sv_;
  Vector coef_;
  double rho_ = 0.0;
};

/// epsilon-insensitive support vector regression.
class KernelSvr : public Regressor {
 public:
  KernelSvr(Kernel k, double C, double epsilon = 0.1, double eps = 1e-3) : kernel_(k), C_(C), epsilon_(epsilon), eps_(eps) {}

  void fit(const Eigen::MatrixXd& X, const Vector& z) override {
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd K = kernel_.gram(X, X);
    std::vector<int> map(static_cast<std::size_t>(2 * n));
    Vector p(2 * n), y(2 * n), C = Vector::Constant(2 * n, C_);
    for (Eigen::Index i = 0; i < n; ++i) {
      map[static_cast<std::size_t>(i)] = map[static_cast<std::size_t>(i + n)] = static_cast<int>(i);
      p(i) = epsilon_ - z(i);
      y(i) = 1.0;
      p(i + n) = epsilon_ + z(i);
      y(i + n) = -1.0;
    }
    const SmoResult r = smo_solve(K, map, p, y, C, eps_);
    flagged = !r.converged;
    rho_ = r.rho;
    std::vector<Eigen::Index> keep;
    std::vector<double> c;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = r.alpha(i) - r.alpha(i + n);
      if (v != 0.0) {
        keep.push_back(i);
        c.push_back(v);
      }
    }
    sv_.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
    coef_.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t q = 0; q < keep.size(); ++q) {
      sv_.row(static_cast<Eigen::Index>(q)) = X.row(keep[q]);
      coef_(static_cast<Eigen::Index>(q)) = c[q];
    }
  }

  Vector predict(const Eigen::MatrixXd& X) const override {
    if (sv_.rows() == 0) return Vector::Constant(X.rows(), -rho_);
    return (kernel_.gram(X, sv_) * coef_).array() - rho_;
  }

  std::string name() const override { return std::string("SVR-") + kernel_name(kernel_.kind); }

 private:
  Kernel kernel_;
  double C_, epsilon_, eps_;
  Eigen::MatrixXd sv_;
  Vector coef_;
  double rho_ = 0.0;
};

}  // namespace migcdr
