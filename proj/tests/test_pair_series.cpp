#include <gtest/gtest.h>

#include "migcdr/pair_series.hpp"
#include "migcdr/synth_gen.hpp"

using namespace migcdr;

namespace {

std::int64_t mid_month(int k) {
  return days_from_civil(2008 + k / 12, static_cast<unsigned>(1 + k % 12), 12) * 86400 + 36000;
}

// Users 0 (ego), 1 (alter), 2 (other). Month k: ego calls alter k times,
// alter calls ego once, ego calls user 2 twice.
Dataset toy_dataset() {
  Dataset ds;
  ds.users = {"e", "a", "o"};
  ds.profiles.assign(3, {});
  for (int k = 0; k < 24; ++k) {
    for (int i = 0; i < k; ++i) ds.records.push_back({0, 1, EventKind::call, Direction::outgoing, mid_month(k) + i, kNoTower});
    ds.records.push_back({1, 0, EventKind::call, Direction::outgoing, mid_month(k) + 100, kNoTower});
    for (int i = 0; i < 2; ++i) ds.records.push_back({0, 2, EventKind::call, Direction::outgoing, mid_month(k) + 200 + i, kNoTower});
  }
  std::sort(ds.records.begin(), ds.records.end(), record_less);
  return ds;
}

double rank_formula_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  auto rank = [](const std::vector<double>& v, std::size_t i) {
    return 1.0 + static_cast<double>(std::count_if(v.begin(), v.end(), [&](double w) { return w < v[i]; }));
  };
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += std::pow(rank(x, i) - rank(y, i), 2);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace

TEST(Standardize, HandComputedEndpoints) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto z = standardize(x);
  const double sd = std::sqrt(60.0 / 9.0);
  EXPECT_FALSE(z.was_constant);
  EXPECT_NEAR(z.values.front(), -4.0 / sd, 1e-12);
  EXPECT_NEAR(z.values.front(), -1.5492, 1e-3);
  EXPECT_NEAR(z.values.back(), 1.5492, 1e-3);
  EXPECT_TRUE(standardize(std::vector<double>{2, 2, 2}).was_constant);
}

TEST(Spearman, DocumentedToys) {
  EXPECT_EQ(*spearman(std::vector<double>{1, 2, 3}, std::vector<double>{3, 1, 2}), -0.5);
  EXPECT_NEAR(*spearman(std::vector<double>{1, 1, 2}, std::vector<double>{5, 5, 9}), 1.0, 1e-12);
  EXPECT_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
}

TEST(Spearman, DistinctValuesMatchRankDifferenceFormula) {
  Rng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + rng.below(30);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = 0.5 * x[i] + rng.normal();
    }
    EXPECT_NEAR(*spearman(x, y), rank_formula_spearman(x, y), 1e-10);
  }
}

TEST(SpearmanProperty, InvariantUnderMonotoneMaps) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(20), y(20), fx(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = static_cast<double>(rng.below(6));
      y[i] = x[i] + rng.normal();
      fx[i] = std::exp(x[i]) + 3.0;
    }
    const auto a = spearman(x, y), b = spearman(fx, y);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_NEAR(*a, *b, 1e-12);
      EXPECT_LE(std::abs(*a), 1.0);
    }
  }
}

TEST(Reciprocity, RangeAndUndefined) {
  EXPECT_FALSE(reciprocity(0, 0).has_value());
  EXPECT_EQ(*reciprocity(3, 1), 0.5);
  EXPECT_EQ(*reciprocity(0, 4), -1.0);
  for (std::uint32_t a = 0; a < 20; ++a)
    for (std::uint32_t b = 1; b < 20; ++b) EXPECT_LE(std::abs(*reciprocity(a, b)), 1.0);
}

TEST(BuildSeries, MonthOffsetsAndQuantities) {
  const Dataset ds = toy_dataset();
  const CallTable calls(ds);
  const StrongPair p{0, 1, 10, {}, {}};
  const PairSeries s = build_series(calls, p);
  ASSERT_EQ(s.length(), 9u);
  for (int t = -4; t <= 4; ++t) {
    const int k = p.m - 1 + t;  // 0-based calendar month of offset t
    const std::size_t i = static_cast<std::size_t>(t + 4);
    EXPECT_EQ(s.count[i], static_cast<std::uint32_t>(k + 1));
    EXPECT_EQ(s.ego_total[i], static_cast<std::uint32_t>(k + 3));
    EXPECT_DOUBLE_EQ(s.fraction[i], (k + 1.0) / (k + 3.0));
    EXPECT_DOUBLE_EQ(*s.reciprocity[i], (k - 1.0) / (k + 1.0));
  }
  EXPECT_THROW(build_series(calls, StrongPair{0, 1, 4, {}, {}}), ContractViolation);
  EXPECT_THROW(build_series(calls, StrongPair{0, 1, 21, {}, {}}), ContractViolation);
}

TEST(Summaries, EqualMeansCountAsRise) {
  PairSeries s;
  s.t_lo = -2;
  s.count = {4, 2, 100, 3, 3};
  s.ego_total = {10, 10, 100, 10, 10};
  s.fraction = {0.4, 0.2, 1.0, 0.3, 0.3};
  s.reciprocity = {0.0, std::nullopt, 1.0, 0.5, -0.5};
  const auto p = summarize(s);
  EXPECT_EQ(p.pre_count, 3.0);
  EXPECT_EQ(p.post_count, 3.0);
  EXPECT_EQ(p.direction_count, Trend::rise);
  EXPECT_NEAR(p.pre_frac, 0.3, 1e-15);
  EXPECT_EQ(p.pre_recip, 0.0);
  EXPECT_EQ(p.post_recip, 0.0);
  EXPECT_EQ(summarize(s, T0Mode::pre).direction_count, Trend::decay);
  EXPECT_EQ(summarize(s, T0Mode::post).post_count, 106.0 / 3.0);
}

TEST(BlockContrast, ShiftExceedsStationary) {
  SeriesSynthConfig gc;
  gc.n_pairs = 800;
  gc.seed = 4;
  const auto shift = generate_pair_series(gc);
  gc.change = ChangeMode::none;
  const auto flat = generate_pair_series(gc);
  const auto a = block_contrast(month_correlation_matrix(shift.series, Quantity::count));
  const auto b = block_contrast(month_correlation_matrix(flat.series, Quantity::count));
  ASSERT_TRUE(a && b);
  EXPECT_GT(*a, *b + 0.1);
  EXPECT_LT(std::abs(*b), 0.05);
}

TEST(CorrMatrix, SymmetricUnitDiagonal) {
  SeriesSynthConfig gc;
  gc.n_pairs = 200;
  const auto g = generate_pair_series(gc);
  const CorrMatrix cm = month_correlation_matrix(g.series, Quantity::fraction);
  ASSERT_EQ(cm.n, 9);
  for (int s = 0; s < cm.n; ++s) {
    EXPECT_NEAR(*cm.at(s, s), 1.0, 1e-12);
    for (int t = 0; t < cm.n; ++t) EXPECT_EQ(cm.at(s, t), cm.at(t, s));
  }
}
