#include <gtest/gtest.h>

#include "migcdr/cluster_engine.hpp"
#include "migcdr/synth_gen.hpp"

using namespace migcdr;

namespace {

Matrix blobs(Rng& rng, const std::vector<std::pair<double, double>>& centers, int per, double sd) {
  Matrix X(static_cast<Eigen::Index>(centers.size()) * per, 2);
  Eigen::Index r = 0;
  for (const auto& [cx, cy] : centers)
    for (int i = 0; i < per; ++i, ++r) {
      X(r, 0) = rng.normal(cx, sd);
      X(r, 1) = rng.normal(cy, sd);
    }
  return X;
}

double partition_inertia(const Matrix& X, const std::vector<int>& lab, int k) {
  double total = 0;
  for (int c = 0; c < k; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(X.cols());
    int n = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (lab[i] == c) {
        mean += X.row(i);
        ++n;
      }
    if (!n) return std::numeric_limits<double>::infinity();
    mean /= n;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (lab[i] == c) total += (X.row(i) - mean).squaredNorm();
  }
  return total;
}

// Global optimum over every labeling with k non-empty clusters.
double exhaustive_inertia(const Matrix& X, int k) {
  const auto n = static_cast<int>(X.rows());
  std::vector<int> lab(n, 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    best = std::min(best, partition_inertia(X, lab, k));
    int i = 0;
    while (i < n && ++lab[i] == k) lab[i++] = 0;
    if (i == n) break;
  }
  return best;
}

double silhouette_oracle(const Matrix& X, const std::vector<int>& lab, int k) {
  double total = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::vector<double> sum(k, 0.0);
    std::vector<int> cnt(k, 0);
    for (Eigen::Index j = 0; j < X.rows(); ++j) {
      if (j == i) continue;
      sum[lab[j]] += (X.row(i) - X.row(j)).norm();
      ++cnt[lab[j]];
    }
    if (cnt[lab[i]] == 0) continue;
    const double a = sum[lab[i]] / cnt[lab[i]];
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != lab[i] && cnt[c]) b = std::min(b, sum[c] / cnt[c]);
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(X.rows());
}

double davies_bouldin_oracle(const Matrix& X, const std::vector<int>& lab, int k) {
  std::vector<Eigen::RowVectorXd> mu(k, Eigen::RowVectorXd::Zero(X.cols()));
  std::vector<int> n(k, 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    mu[lab[i]] += X.row(i);
    ++n[lab[i]];
  }
  for (int c = 0; c < k; ++c) mu[c] /= n[c];
  std::vector<double> s(k, 0.0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) s[lab[i]] += (X.row(i) - mu[lab[i]]).norm() / n[lab[i]];
  double total = 0;
  for (int a = 0; a < k; ++a) {
    double worst = 0;
    for (int b = 0; b < k; ++b)
      if (a != b) worst = std::max(worst, (s[a] + s[b]) / (mu[a] - mu[b]).norm());
    total += worst;
  }
  return total / k;
}

// Naive Ward: repeatedly merge the pair of clusters whose union increases the
// within-cluster sum of squares least.
std::vector<int> ward_oracle(const Matrix& X, int k) {
  std::vector<std::vector<Eigen::Index>> cl;
  for (Eigen::Index i = 0; i < X.rows(); ++i) cl.push_back({i});
  auto sse = [&](const std::vector<Eigen::Index>& m) {
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(X.cols());
    for (auto i : m) mu += X.row(i);
    mu /= static_cast<double>(m.size());
    double s = 0;
    for (auto i : m) s += (X.row(i) - mu).squaredNorm();
    return s;
  };
  while (static_cast<int>(cl.size()) > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < cl.size(); ++a)
      for (std::size_t b = a + 1; b < cl.size(); ++b) {
        auto u = cl[a];
        u.insert(u.end(), cl[b].begin(), cl[b].end());
        const double inc = sse(u) - sse(cl[a]) - sse(cl[b]);
        if (inc < best) {
          best = inc;
          ba = a;
          bb = b;
        }
      }
    cl[ba].insert(cl[ba].end(), cl[bb].begin(), cl[bb].end());
    cl.erase(cl.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  std::vector<int> lab(X.rows());
  for (std::size_t c = 0; c < cl.size(); ++c)
    for (auto i : cl[c]) lab[i] = static_cast<int>(c);
  return lab;
}

}  // namespace

TEST(KMeans, OneDimensionalToy) {
  Matrix X(4, 1);
  X << 0.9, 1.1, 3.9, 4.1;
  const ClusterModel m = kmeans(X, 2, KMeansConfig{});
  std::vector<double> c{m.centroids(0, 0), m.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_NEAR(c[0], 1.0, 1e-12);
  EXPECT_NEAR(c[1], 4.0, 1e-12);
  EXPECT_NEAR(m.inertia, 0.04, 1e-12);
  EXPECT_NEAR(exhaustive_inertia(X, 2), 0.04, 1e-12);
}

TEST(KMeans, ReachesExhaustiveOptimumOnSmallSets) {
  Rng rng(1);
  int hits = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Matrix X(8, 2);
    for (Eigen::Index i = 0; i < 8; ++i) X.row(i) << rng.normal(), rng.normal();
    for (int k : {2, 3}) {
      KMeansConfig cfg;
      cfg.seed = static_cast<std::uint64_t>(trial);
      cfg.restarts = 20;
      const double best = exhaustive_inertia(X, k), got = kmeans(X, k, cfg).inertia;
      EXPECT_GE(got, best - 1e-9);
      hits += got <= best + 1e-9;
      cfg.restarts = 200;
      EXPECT_NEAR(kmeans(X, k, cfg).inertia, best, 1e-9);
    }
  }
  // Lloyd is a local method; a rare miss at 20 restarts is expected
  EXPECT_GE(hits, 76);
}

TEST(KMeansProperty, InertiaNeverIncreases) {
  Rng rng(2);
  const Matrix X = blobs(rng, {{0, 0}, {1, 1}, {2, 0}}, 40, 0.7);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = detail::lloyd(X, 3, KMeansConfig{}, s);
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
      EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] + 1e-9);
    EXPECT_EQ(distinct_labels(m.labels), 3);
  }
}

TEST(KMeans, SeedDeterministicAndThreadIndependent) {
  Rng rng(3);
  const Matrix X = blobs(rng, {{0, 0}, {3, 3}}, 50, 1.0);
  KMeansConfig a, b;
  a.seed = b.seed = 77;
  b.threads = 3;
  const auto ma = kmeans(X, 2, a), mb = kmeans(X, 2, b);
  EXPECT_EQ(ma.labels, mb.labels);
  EXPECT_EQ(ma.inertia, mb.inertia);
}

TEST(KMeans, RejectsBadInput) {
  Matrix X(2, 1);
  X << 1, 2;
  EXPECT_THROW(kmeans(X, 3), ParameterError);
  X(0, 0) = std::nan("");
  EXPECT_THROW(kmeans(X, 1), ParameterError);
}

TEST(Validity, DocumentedFourPointToy) {
  Matrix X(4, 2);
  X << 0, 0, 0, 1, 4, 0, 4, 1;
  const std::vector<int> lab{0, 0, 1, 1};
  EXPECT_NEAR(*silhouette_mean(X, lab), 1.0 - 2.0 / (4.0 + std::sqrt(17.0)), 1e-12);
  EXPECT_NEAR(*silhouette_mean(X, lab), 0.7538, 1e-3);
  EXPECT_NEAR(*davies_bouldin(X, lab), 0.25, 1e-6);
  EXPECT_FALSE(silhouette_mean(X, std::vector<int>{0, 0, 0, 0}).has_value());
}

TEST(Validity, MatchBruteForceOracles) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 2 + trial % 3;
    Matrix X(30, 3);
    std::vector<int> lab(30);
    for (int i = 0; i < 30; ++i) {
      lab[i] = i % k;
      for (int j = 0; j < 3; ++j) X(i, j) = rng.normal(lab[i] * 1.5, 1.0);
    }
    EXPECT_NEAR(*silhouette_mean(X, lab), silhouette_oracle(X, lab, k), 1e-12);
    EXPECT_NEAR(*davies_bouldin(X, lab), davies_bouldin_oracle(X, lab, k), 1e-12);
  }
}

TEST(Jaccard, SeparatedBlobsStableUniformCloudNot) {
  Rng rng(6);
  const Matrix sep = blobs(rng, {{0, 0}, {20, 0}}, 60, 1.0);
  Matrix cloud(120, 2);
  for (Eigen::Index i = 0; i < 120; ++i) cloud.row(i) << rng.uniform(), rng.uniform();
  KMeansConfig km;
  km.seed = 8;
  const auto js = jaccard_bootstrap(sep, 2, km, {50, 3, false});
  for (double j : js) EXPECT_GE(j, 0.95);
  const auto jc = jaccard_bootstrap(cloud, 5, km, {50, 3, false});
  EXPECT_LT(std::accumulate(jc.begin(), jc.end(), 0.0) / jc.size(), 0.9);
  const auto ident = jaccard_bootstrap(sep, 2, km, {10, 3, true});
  for (double j : ident) EXPECT_DOUBLE_EQ(j, 1.0);
}

TEST(SelectK, ThreePlantedRegimes) {
  Rng rng(7);
  const Matrix X = blobs(rng, {{0, 0}, {6, 0}, {3, 6}}, 50, 0.6);
  KMeansConfig km;
  km.seed = 9;
  const KSelection sel = select_k(X, 2, 6, km, {30, 3, false});
  EXPECT_EQ(sel.k_star, 3);
  EXPECT_EQ(sel.table.size(), 5u);
}

TEST(SelectK, PlantedRiseDecaySeries) {
  SeriesSynthConfig gc;
  gc.n_pairs = 400;
  gc.seed = 12;
  const auto g = generate_pair_series(gc);
  std::vector<std::vector<double>> v;
  for (const auto& s : g.series) v.push_back(s.values(Quantity::count));
  const Matrix X = standardized_matrix(v, -4, -4, 4);
  KMeansConfig km;
  km.seed = 2;
  EXPECT_EQ(select_k(X, 2, 6, km, {30, 3, false}).k_star, 2);
}

TEST(ZeroCrossing, LinearInterpolationLargestJump) {
  EXPECT_DOUBLE_EQ(*zero_crossing(std::vector<double>{-1, -1, 1, 1}, -2), -0.5);
  EXPECT_DOUBLE_EQ(*zero_crossing(std::vector<double>{-3, 1, -0.1, 0.1}, 0), 0.75);
  EXPECT_FALSE(zero_crossing(std::vector<double>{1, 2, 3}, 0).has_value());
}

TEST(LabelAgreement, MapsPrototypesToTrends) {
  Matrix C(2, 5);
  C << -1, -1, 0, 1, 1,  //
      1, 1, 0, -1, -1;
  const std::vector<int> lab{0, 1, 1, 0};
  const std::vector<Trend> truth{Trend::rise, Trend::decay, Trend::rise, Trend::rise};
  const Agreement ag = label_agreement(C, -2, lab, truth);
  EXPECT_FALSE(ag.flagged);
  EXPECT_EQ(ag.cluster_trend[0], Trend::rise);
  EXPECT_DOUBLE_EQ(ag.fraction, 0.75);
}

TEST(Ward, MatchesNaiveMergeOracle) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = blobs(rng, {{0, 0}, {4, 1}, {1, 5}}, 8, 1.0);
    for (int k : {2, 3, 4}) {
      const auto got = ward_labels(X, k);
      EXPECT_DOUBLE_EQ(label_match_fraction(got, ward_oracle(X, k), k), 1.0);
    }
  }
}

TEST(LabelMatch, PermutationInvariant) {
  const std::vector<int> a{0, 0, 1, 1, 2, 2}, b{2, 2, 0, 0, 1, 1}, c{2, 2, 0, 1, 1, 1};
  EXPECT_DOUBLE_EQ(label_match_fraction(a, b, 3), 1.0);
  EXPECT_DOUBLE_EQ(label_match_fraction(a, c, 3), 5.0 / 6.0);
}

TEST(MonthSampler, UniformHistogramWithinMultinomialBand) {
  std::vector<int> months;
  for (int m = 1; m <= 24; ++m) months.push_back(m);
  const MonthSampler s(months, 5, 20);
  Rng rng(14);
  std::vector<int> hits(25, 0);
  const int draws = 16000;
  for (int i = 0; i < draws; ++i) ++hits[s.draw(rng)];
  // per-bin 99% band with a Bonferroni split over 16 bins: z = 3.42
  const double p = 1.0 / 16, sd = std::sqrt(draws * p * (1 - p));
  for (int m = 1; m <= 24; ++m) {
    if (m < 5 || m > 20) EXPECT_EQ(hits[m], 0);
    else EXPECT_NEAR(hits[m], draws * p, 3.42 * sd);
  }
}

TEST(Control, DeterministicCappedAndFlagged) {
  const MonthSampler s(std::vector<int>{6, 7, 8}, 5, 20);
  std::vector<UserId> egos{5, 1, 9, 3, 7};
  auto alters = [](UserId e, int m) { return std::vector<UserId>{e + 100, e + 200}; };
  const ControlSet a = make_control(egos, s, 6, 42, alters), b = make_control(egos, s, 6, 42, alters);
  ASSERT_EQ(a.pairs.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.pairs[i].ego, b.pairs[i].ego);
    EXPECT_EQ(a.pairs[i].dummy_m, b.pairs[i].dummy_m);
    EXPECT_GE(a.pairs[i].dummy_m, 6);
    EXPECT_LE(a.pairs[i].dummy_m, 8);
  }
  EXPECT_FALSE(a.partial);
  const ControlSet c = make_control(egos, s, 50, 42, alters);
  EXPECT_TRUE(c.partial);
  EXPECT_EQ(c.pairs.size(), 10u);
  const ControlSet e = make_control(egos, MonthSampler(std::vector<int>{}, 5, 20), 3, 42, alters);
  EXPECT_TRUE(e.pairs.empty());
  EXPECT_TRUE(e.partial);
}

TEST(Truncation, SkipsShortWindowsAndDropsConstants) {
  SeriesSynthConfig gc;
  gc.n_pairs = 300;
  const auto g = generate_pair_series(gc);
  std::vector<std::vector<double>> v;
  for (const auto& s : g.series) v.push_back(s.values(Quantity::count));
  v.push_back(std::vector<double>(9, 3.0));
  const std::vector<std::pair<int, int>> windows{{-4, 4}, {-1, 1}, {-2, 4}};
  KMeansConfig km;
  const auto res = truncation_analysis(v, -4, windows, km);
  ASSERT_EQ(res.size(), 2u);
  EXPECT_GE(res[0].dropped_constant, 1u);
  EXPECT_EQ(res[0].used + res[0].dropped_constant, v.size());
  for (const auto& w : res) EXPECT_EQ(w.crossings.size(), 2u);
}
