#pragma once
// k-means with k-means++ seeding, internal validity indices, bootstrap
// Jaccard stability, the dummy-month control set, truncated-window
// re-clustering and Ward verification clustering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "migcdr/pair_series.hpp"
#include "migcdr/util/rng.hpp"
#include "migcdr/util/support.hpp"

namespace migcdr {

using Matrix = Eigen::MatrixXd;  // one point per row

struct KMeansConfig {
  int restarts = 10;
  int max_iter = 300;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ClusterModel {
  int k = 0;
  Matrix centroids;
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each assignment step of the winning restart
  int iterations = 0;
  int restart = 0;
};

namespace detail {

inline double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

inline Matrix kmeanspp_init(const Matrix& X, int k, Rng& rng) {
  const Eigen::Index n = X.rows();
  Matrix C(k, X.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  C.row(0) = X.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(X, i, C, c - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    C.row(c) = X.row(pick);
  }
  return C;
}

// Nearest centroid per row, ties to the lowest index. Returns the inertia.
inline double assign(const Matrix& X, const Matrix& C, std::vector<int>& labels) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < C.rows(); ++c) {
      const double d = sq_dist(X, i, C, c);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    inertia += bd;
  }
  return inertia;
}

// Cluster means; an empty cluster takes the point farthest from its centroid.
inline Matrix update(const Matrix& X, const Matrix& C, std::vector<int>& labels, int k) {
  Matrix next = Matrix::Zero(k, X.cols());
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    next.row(labels[static_cast<std::size_t>(i)]) += X.row(i);
    ++sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) continue;
    Eigen::Index far = -1;
    double fd = -1.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      if (sizes[static_cast<std::size_t>(l)] <= 1) continue;
      const double d = sq_dist(X, i, C, l);
      if (d > fd) {
        fd = d;
        far = i;
      }
    }
    if (far < 0) continue;
    const int old = labels[static_cast<std::size_t>(far)];
    next.row(old) -= X.row(far);
    --sizes[static_cast<std::size_t>(old)];
    labels[static_cast<std::size_t>(far)] = c;
    next.row(c) = X.row(far);
    sizes[static_cast<std::size_t>(c)] = 1;
  }
  for (int c = 0; c < k; ++c)
    if (sizes[static_cast<std::size_t>(c)] > 0) next.row(c) /= sizes[static_cast<std::size_t>(c)];
  return next;
}

inline ClusterModel lloyd(const Matrix& X, int k, const KMeansConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ClusterModel m;
  m.k = k;
  m.centroids = kmeanspp_init(X, k, rng);
  m.labels.assign(static_cast<std::size_t>(X.rows()), -1);
  std::vector<int> prev;
  for (int it = 0; it < cfg.max_iter; ++it) {
    prev = m.labels;
    const double inertia = assign(X, m.centroids, m.labels);
    m.inertia_history.push_back(inertia);
    m.iterations = it + 1;
    if (m.labels == prev) break;
    Matrix next = update(X, m.centroids, m.labels, k);
    const double shift = (next - m.centroids).squaredNorm();
    m.centroids = std::move(next);
    if (shift <= cfg.tol) {
      prev = m.labels;
      m.inertia_history.push_back(assign(X, m.centroids, m.labels));
      if (m.labels == prev) break;
      m.centroids = update(X, m.centroids, m.labels, k);
    }
  }
  // final centroids are exactly the member means of the final labels
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  Matrix C = Matrix::Zero(k, X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    C.row(m.labels[static_cast<std::size_t>(i)]) += X.row(i);
    ++sizes[static_cast<std::size_t>(m.labels[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) C.row(c) /= sizes[static_cast<std::size_t>(c)];
    else C.row(c) = m.centroids.row(c);
  }
  m.centroids = std::move(C);
  m.inertia = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) m.inertia += sq_dist(X, i, m.centroids, m.labels[static_cast<std::size_t>(i)]);
  return m;
}

}  // namespace detail

/// Best-of-restarts Lloyd clustering; each restart derives its own seed.
inline ClusterModel kmeans(const Matrix& X, int k, const KMeansConfig& cfg = {}) {
  if (k < 1) throw ParameterError("kmeans: k must be >= 1");
  if (X.rows() < k) throw ParameterError("kmeans: fewer points than clusters");
  if (!X.allFinite()) throw ParameterError("kmeans: non-finite input");
  const int restarts = std::max(1, cfg.restarts);
  std::vector<ClusterModel> runs(static_cast<std::size_t>(restarts));
  parallel_for(runs.size(), cfg.threads, [&](std::size_t r) {
    runs[r] = detail::lloyd(X, k, cfg, derive_seed(cfg.seed, "kmeans", static_cast<std::uint64_t>(r)));
    runs[r].restart = static_cast<int>(r);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

inline int distinct_labels(std::span<const int> labels) {
  std::vector<int> v(labels.begin(), labels.end());
  std::sort(v.begin(), v.end());
  return static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
}

/// Mean silhouette; singleton clusters score 0. Missing with fewer than two
/// non-empty clusters.
inline std::optional<double> silhouette_mean(const Matrix& X, std::span<const int> labels) {
  const Eigen::Index n = X.rows();
  if (distinct_labels(labels) < 2) return std::nullopt;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  std::vector<double> sums(static_cast<std::size_t>(k));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (X.row(i) - X.row(j)).norm();
    const int own = labels[static_cast<std::size_t>(i)];
    if (sizes[static_cast<std::size_t>(own)] <= 1) continue;
    const double a = sums[static_cast<std::size_t>(own)] / (sizes[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && sizes[static_cast<std::size_t>(c)] > 0)
        b = std::min(b, sums[static_cast<std::size_t>(c)] / sizes[static_cast<std::size_t>(c)]);
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

/// Davies-Bouldin index with mean centroid distance as cluster scatter.
/// Coincident centroid pairs are skipped with a warning.
inline std::optional<double> davies_bouldin(const Matrix& X, std::span<const int> labels) {
  if (distinct_labels(labels) < 2) return std::nullopt;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix C = Matrix::Zero(k, X.cols());
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    C.row(labels[static_cast<std::size_t>(i)]) += X.row(i);
    ++sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  std::vector<int> present;
  for (int c = 0; c < k; ++c)
    if (sizes[static_cast<std::size_t>(c)] > 0) {
      C.row(c) /= sizes[static_cast<std::size_t>(c)];
      present.push_back(c);
    }
  std::vector<double> S(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    S[static_cast<std::size_t>(l)] += (X.row(i) - C.row(l)).norm() / sizes[static_cast<std::size_t>(l)];
  }
  double total = 0.0;
  bool warned = false;
  for (int i : present) {
    double worst = 0.0;
    for (int j : present) {
      if (i == j) continue;
      const double M = (C.row(i) - C.row(j)).norm();
      if (!(M > 0.0)) {
        if (!warned) log_warn("davies_bouldin: coincident centroids skipped");
        warned = true;
        continue;
      }
      worst = std::max(worst, (S[static_cast<std::size_t>(i)] + S[static_cast<std::size_t>(j)]) / M);
    }
    total += worst;
  }
  return total / static_cast<double>(present.size());
}

struct BootstrapConfig {
  int replicates = 100;
  int restarts = 3;  // k-means restarts inside each replicate
  bool identity_resample = false;
};

/// Per-original-cluster mean of the best Jaccard overlap with any cluster of
/// a reclustered bootstrap sample.
inline std::vector<double> jaccard_bootstrap(const Matrix& X, int k, const KMeansConfig& km,
                                             const BootstrapConfig& bc = {}) {
  if (X.rows() < k) throw ParameterError("jaccard_bootstrap: fewer points than clusters");
  if (bc.replicates < 10) log_warn("jaccard_bootstrap: fewer than 10 replicates gives an unstable estimate");
  const ClusterModel base = kmeans(X, k, km);
  const auto n = static_cast<std::size_t>(X.rows());
  const auto B = static_cast<std::size_t>(std::max(1, bc.replicates));
  std::vector<std::vector<double>> per_rep(B, std::vector<double>(static_cast<std::size_t>(k), -1.0));
  parallel_for(B, km.threads, [&](std::size_t b) {
    std::vector<std::size_t> idx(n);
    KMeansConfig inner = km;
    inner.threads = 1;
    if (bc.identity_resample) {
      std::iota(idx.begin(), idx.end(), 0);
    } else {
      Rng rng(derive_seed(km.seed, "bootstrap", static_cast<std::uint64_t>(b)));
      for (auto& v : idx) v = static_cast<std::size_t>(rng.below(n));
      inner.seed = derive_seed(km.seed, "bootstrap-kmeans", static_cast<std::uint64_t>(b));
      inner.restarts = bc.restarts;
    }
    Matrix Xb(static_cast<Eigen::Index>(n), X.cols());
    for (std::size_t i = 0; i < n; ++i) Xb.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
    const ClusterModel mb = kmeans(Xb, k, inner);
    // distinct original points present, with their bootstrap label
    std::vector<int> boot_label(n, -1);
    for (std::size_t i = 0; i < n; ++i) boot_label[idx[i]] = mb.labels[i];
    for (int c = 0; c < k; ++c) {
      std::size_t a_size = 0;
      std::vector<std::size_t> inter(static_cast<std::size_t>(k), 0), b_size(static_cast<std::size_t>(k), 0);
      for (std::size_t p = 0; p < n; ++p) {
        if (boot_label[p] < 0) continue;
        const bool in_a = base.labels[p] == c;
        a_size += in_a;
        ++b_size[static_cast<std::size_t>(boot_label[p])];
        if (in_a) ++inter[static_cast<std::size_t>(boot_label[p])];
      }
      if (a_size == 0) continue;
      double best = 0.0;
      for (int c2 = 0; c2 < k; ++c2) {
        const double uni = static_cast<double>(a_size + b_size[static_cast<std::size_t>(c2)] - inter[static_cast<std::size_t>(c2)]);
        if (uni > 0) best = std::max(best, static_cast<double>(inter[static_cast<std::size_t>(c2)]) / uni);
      }
      per_rep[b][static_cast<std::size_t>(c)] = best;
    }
  });
  std::vector<double> scores(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    double s = 0.0;
    int cnt = 0;
    for (const auto& rep : per_rep)
      if (rep[static_cast<std::size_t>(c)] >= 0.0) {
        s += rep[static_cast<std::size_t>(c)];
        ++cnt;
      }
    scores[static_cast<std::size_t>(c)] = cnt > 0 ? s / cnt : 0.0;
  }
  return scores;
}

struct ClusterQuality {
  int k = 0;
  std::optional<double> silhouette;
  std::optional<double> davies_bouldin;
  std::vector<double> jaccard;
  double inertia = 0.0;

  double jaccard_mean() const {
    if (jaccard.empty()) return 0.0;
    return std::accumulate(jaccard.begin(), jaccard.end(), 0.0) / static_cast<double>(jaccard.size());
  }
};

struct KSelection {
  int k_star = 0;
  int by_silhouette = 0;
  int by_davies_bouldin = 0;
  int by_jaccard = 0;
  std::vector<ClusterQuality> table;
};

/// Scores every k in [k_lo, k_hi] and picks k by majority of the three
/// indices; with no majority the silhouette choice wins.
inline KSelection select_k(const Matrix& X, int k_lo, int k_hi, const KMeansConfig& km,
                           const BootstrapConfig& bc = {}) {
  KSelection sel;
  k_hi = std::min<int>(k_hi, static_cast<int>(X.rows()));
  for (int k = k_lo; k <= k_hi; ++k) {
    const ClusterModel m = kmeans(X, k, km);
    ClusterQuality q;
    q.k = k;
    q.inertia = m.inertia;
    q.silhouette = silhouette_mean(X, m.labels);
    q.davies_bouldin = davies_bouldin(X, m.labels);
    q.jaccard = jaccard_bootstrap(X, k, km, bc);
    sel.table.push_back(std::move(q));
  }
  if (sel.table.empty()) throw ParameterError("select_k: empty k range");
  double bs = -std::numeric_limits<double>::infinity(), bd = std::numeric_limits<double>::infinity(), bj = -1.0;
  for (const auto& q : sel.table) {
    if (q.silhouette && *q.silhouette > bs) {
      bs = *q.silhouette;
      sel.by_silhouette = q.k;
    }
    if (q.davies_bouldin && *q.davies_bouldin < bd) {
      bd = *q.davies_bouldin;
      sel.by_davies_bouldin = q.k;
    }
    if (q.jaccard_mean() > bj) {
      bj = q.jaccard_mean();
      sel.by_jaccard = q.k;
    }
  }
  if (sel.by_davies_bouldin == sel.by_jaccard && sel.by_jaccard != 0) sel.k_star = sel.by_jaccard;
  else sel.k_star = sel.by_silhouette != 0 ? sel.by_silhouette : sel.table.front().k;
  return sel;
}

/// Rows of standardized series values over [t_lo, t_hi]; constant series are
/// dropped and `kept` lists the surviving input indices.
inline Matrix standardized_matrix(std::span<const std::vector<double>> series, int series_t_lo, int t_lo, int t_hi,
                                  std::vector<std::size_t>* kept = nullptr) {
  const int len = t_hi - t_lo + 1;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::span<const double> window(s.data() + (t_lo - series_t_lo), static_cast<std::size_t>(len));
    auto z = standardize(window);
    if (z.was_constant) continue;
    rows.push_back(std::move(z.values));
    idx.push_back(i);
  }
  Matrix X(static_cast<Eigen::Index>(rows.size()), len);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < len; ++c) X(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  if (kept) *kept = std::move(idx);
  return X;
}

/// Zero crossing of a prototype curve: among adjacent sign changes, the one
/// with the largest jump, located by linear interpolation.
inline std::optional<double> zero_crossing(std::span<const double> curve, int t_lo) {
  std::optional<double> at;
  double best_jump = -1.0;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double a = curve[i], b = curve[i + 1];
    if (a == 0.0 && b == 0.0) continue;
    if (!((a <= 0.0 && b > 0.0) || (a >= 0.0 && b < 0.0) || (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0))) continue;
    const double jump = std::abs(b - a);
    if (jump > best_jump) {
      best_jump = jump;
      at = t_lo + static_cast<double>(i) + a / (a - b);
    }
  }
  return at;
}

struct WindowResult {
  int t_lo = 0, t_hi = 0;
  std::size_t used = 0;
  std::size_t dropped_constant = 0;
  ClusterModel model;
  std::vector<std::size_t> kept;
  std::vector<std::optional<double>> crossings;  // per prototype
};

/// Re-standardizes each window, clusters with k = 2 and reports prototype
/// curves and their zero crossings. Windows shorter than 4 are skipped.
inline std::vector<WindowResult> truncation_analysis(std::span<const std::vector<double>> series, int series_t_lo,
                                                     std::span<const std::pair<int, int>> windows,
                                                     const KMeansConfig& km) {
  std::vector<WindowResult> out;
  for (const auto& [lo, hi] : windows) {
    if (hi - lo + 1 < 4) {
      log_warn("truncation_analysis: window [" + std::to_string(lo) + "," + std::to_string(hi) + "] too short, skipped");
      continue;
    }
    WindowResult w;
    w.t_lo = lo;
    w.t_hi = hi;
    const Matrix X = standardized_matrix(series, series_t_lo, lo, hi, &w.kept);
    w.used = w.kept.size();
    w.dropped_constant = series.size() - w.used;
    if (X.rows() < 2) {
      log_warn("truncation_analysis: too few non-constant series");
      out.push_back(std::move(w));
      continue;
    }
    w.model = kmeans(X, 2, km);
    for (Eigen::Index c = 0; c < w.model.centroids.rows(); ++c) {
      std::vector<double> curve(static_cast<std::size_t>(w.model.centroids.cols()));
      for (Eigen::Index j = 0; j < w.model.centroids.cols(); ++j) curve[static_cast<std::size_t>(j)] = w.model.centroids(c, j);
      w.crossings.push_back(zero_crossing(curve, lo));
    }
    out.push_back(std::move(w));
  }
  return out;
}

struct Agreement {
  double fraction = 0.0;
  bool flagged = false;              // prototypes lacked a clean sign pattern
  std::vector<Trend> cluster_trend;  // identity of each cluster
};

/// Matches k = 2 cluster labels to rise/decay via prototype shape and
/// returns the share of pairs whose label agrees with `actual`.
inline Agreement label_agreement(const Matrix& centroids, int t_lo, std::span<const int> labels,
                                 std::span<const Trend> actual) {
  Agreement ag;
  if (centroids.rows() != 2) throw ParameterError("label_agreement: needs k = 2");
  double pre[2] = {0, 0}, post[2] = {0, 0};
  for (int c = 0; c < 2; ++c) {
    int np = 0, nq = 0;
    for (Eigen::Index j = 0; j < centroids.cols(); ++j) {
      const int t = t_lo + static_cast<int>(j);
      if (t < 0) {
        pre[c] += centroids(c, j);
        ++np;
      } else if (t > 0) {
        post[c] += centroids(c, j);
        ++nq;
      }
    }
    if (np) pre[c] /= np;
    if (nq) post[c] /= nq;
  }
  auto clean = [&](int c, Trend t) {
    return t == Trend::decay ? (pre[c] > 0 && post[c] < 0) : (pre[c] < 0 && post[c] > 0);
  };
  if (clean(0, Trend::decay) && clean(1, Trend::rise)) {
    ag.cluster_trend = {Trend::decay, Trend::rise};
  } else if (clean(0, Trend::rise) && clean(1, Trend::decay)) {
    ag.cluster_trend = {Trend::rise, Trend::decay};
  } else {
    ag.flagged = true;
    ag.cluster_trend = post[0] < post[1] ? std::vector<Trend>{Trend::decay, Trend::rise}
                                         : std::vector<Trend>{Trend::rise, Trend::decay};
  }
  if (labels.empty()) return ag;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    hit += ag.cluster_trend[static_cast<std::size_t>(labels[i])] == actual[i];
  ag.fraction = static_cast<double>(hit) / static_cast<double>(labels.size());
  return ag;
}

/// Ward agglomeration (nearest-neighbour chain over Lance-Williams updates of
/// squared distances) cut at k clusters. Labels follow first appearance.
inline std::vector<int> ward_labels(const Matrix& X, int k) {
  const auto n = static_cast<std::size_t>(X.rows());
  if (k < 1 || static_cast<std::size_t>(k) > n) throw ParameterError("ward_labels: invalid k");
  std::vector<double> D(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      D[i * n + j] = D[j * n + i] = (X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).squaredNorm();
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  struct Merge {
    std::size_t a, b;
    double h;
  };
  std::vector<Merge> merges;
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        if (active[i]) {
          chain.push_back(i);
          break;
        }
    }
    for (;;) {
      const std::size_t a = chain.back();
      std::size_t nn = n;
      double best = std::numeric_limits<double>::infinity();
      if (chain.size() >= 2) {
        nn = chain[chain.size() - 2];
        best = D[a * n + nn];
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (!active[j] || j == a) continue;
        if (D[a * n + j] < best) {
          best = D[a * n + j];
          nn = j;
        }
      }
      if (chain.size() >= 2 && nn == chain[chain.size() - 2]) {
        chain.pop_back();
        chain.pop_back();
        const std::size_t lo = std::min(a, nn), hi = std::max(a, nn);
        merges.push_back({lo, hi, best});
        for (std::size_t j = 0; j < n; ++j) {
          if (!active[j] || j == lo || j == hi) continue;
          const double si = static_cast<double>(size[lo]), sj = static_cast<double>(size[hi]),
                       sk = static_cast<double>(size[j]);
          const double d = ((si + sk) * D[lo * n + j] + (sj + sk) * D[hi * n + j] - sk * D[lo * n + hi]) / (si + sj + sk);
          D[lo * n + j] = D[j * n + lo] = d;
        }
        size[lo] += size[hi];
        active[hi] = false;
        --remaining;
        break;
      }
      chain.push_back(nn);
    }
  }
  std::stable_sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) { return x.h < y.h; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (std::size_t m = 0; m + static_cast<std::size_t>(k) < n; ++m) parent[find(merges[m].b)] = find(merges[m].a);
  std::vector<int> labels(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

/// Largest fraction of points on which two labelings agree under some
/// relabeling of clusters (brute force over permutations, k <= 8).
inline double label_match_fraction(std::span<const int> a, std::span<const int> b, int k) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  if (k > 8) throw ParameterError("label_match_fraction: k too large");
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hit += perm[static_cast<std::size_t>(a[i])] == b[i];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(a.size());
}

/// Histogram of moving months; sampling is restricted to [lo, hi].
class MonthSampler {
 public:
  MonthSampler(std::span<const int> months, int lo, int hi) : lo_(lo), hi_(hi) {
    weights_.assign(static_cast<std::size_t>(std::max(0, hi - lo + 1)), 0.0);
    for (int m : months)
      if (m >= lo && m <= hi) weights_[static_cast<std::size_t>(m - lo)] += 1.0;
  }

  bool empty() const {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w <= 0.0; });
  }
  int draw(Rng& rng) const { return lo_ + static_cast<int>(rng.categorical(weights_)); }
  std::span<const double> weights() const { return weights_; }
  int lo() const { return lo_; }
  int hi() const { return hi_; }

 private:
  int lo_, hi_;
  std::vector<double> weights_;
};

struct ControlPair {
  UserId ego = 0;
  UserId alter = 0;
  int dummy_m = 0;
};

struct ControlSet {
  std::vector<ControlPair> pairs;
  std::size_t requested = 0;
  std::size_t egos_tried = 0;
  bool partial = false;
};

/// Dummy-month control sample. Egos are visited in a seeded order, each gets
/// one dummy month drawn from `sampler`, and every alter that is a strong tie
/// relative to that month is taken until `size` pairs are collected.
inline ControlSet make_control(std::span<const UserId> candidate_egos, const MonthSampler& sampler, std::size_t size,
                               std::uint64_t seed,
                               const std::function<std::vector<UserId>(UserId, int)>& strong_alters) {
  ControlSet cs;
  cs.requested = size;
  if (sampler.empty()) {
    log_warn("make_control: empty moving-month histogram");
    cs.partial = size > 0;
    return cs;
  }
  std::vector<UserId> egos(candidate_egos.begin(), candidate_egos.end());
  std::sort(egos.begin(), egos.end());
  Rng order(derive_seed(seed, "control-order"));
  order.shuffle(egos.begin(), egos.end());
  for (UserId ego : egos) {
    if (cs.pairs.size() >= size) break;
    ++cs.egos_tried;
    Rng rng(derive_seed(seed, "control-month", static_cast<std::uint64_t>(ego)));
    const int m = sampler.draw(rng);
    auto alters = strong_alters(ego, m);
    std::sort(alters.begin(), alters.end());
    for (UserId a : alters) {
      if (cs.pairs.size() >= size) break;
      cs.pairs.push_back({ego, a, m});
    }
  }
  if (cs.pairs.size() < size) {
    cs.partial = true;
    log_warn("make_control: only " + std::to_string(cs.pairs.size()) + " of " + std::to_string(size) +
             " control pairs available");
  }
  return cs;
}

}  // namespace migcdr
