#include <gtest/gtest.h>

#include "migcdr/home_inference.hpp"

using namespace migcdr;

namespace {

constexpr ProvinceId A = 0, B = 1, U = kUnknown;

std::vector<ProvinceId> runs(std::initializer_list<std::pair<ProvinceId, int>> rle) {
  std::vector<ProvinceId> v;
  for (auto [p, n] : rle) v.insert(v.end(), static_cast<std::size_t>(n), p);
  return v;
}

const std::int64_t kMonday = days_from_civil(2008, 1, 7);

}  // namespace

TEST(ModalValue, UnknownCompetesAsCategory) {
  const std::vector<std::int32_t> v{A, A, U, U, U};
  EXPECT_EQ(daily_modal_province(v, 1), U);
  EXPECT_FALSE(modal_value({}, 1).has_value());
}

TEST(ModalValue, TieBreakIsSeededAndAmongTied) {
  const std::vector<std::int32_t> v{3, 5, 5, 3, 9};
  int threes = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const auto m = modal_value(v, s);
    ASSERT_TRUE(m == 3 || m == 5);
    EXPECT_EQ(m, modal_value(v, s));
    threes += *m == 3;
  }
  // binomial(2000, 0.5): 99.9% band is roughly +/- 74
  EXPECT_NEAR(threes, 1000, 74);
}

TEST(MonthlyHome, WeekendsExcludedAndUnknownCanWin) {
  HomeConfig cfg;
  std::vector<DailyLocation> d;
  for (int i = 0; i < 4; ++i) d.push_back({kMonday + i, A});
  for (int i = 0; i < 6; ++i) d.push_back({kMonday + 7 + (i % 5), U});
  EXPECT_EQ(monthly_home(d, cfg, 1), U);

  std::vector<DailyLocation> weekend{{kMonday + 5, A}, {kMonday + 6, A}};
  EXPECT_EQ(monthly_home(weekend, cfg, 1), U);
  weekend.push_back({kMonday + 2, B});
  EXPECT_EQ(monthly_home(weekend, cfg, 1), B);
}

TEST(NightWindow, WrapsPastMidnight) {
  HomeConfig cfg;
  cfg.night_only = std::pair{22u, 6u};
  EXPECT_TRUE(cfg.hour_allowed(23));
  EXPECT_TRUE(cfg.hour_allowed(2));
  EXPECT_FALSE(cfg.hour_allowed(12));
}

TEST(Classify, DocumentedForms) {
  EXPECT_EQ(classify_trajectory(runs({{A, 24}})), MoverStatus::non_mover(A));
  EXPECT_EQ(classify_trajectory(runs({{A, 5}, {B, 19}})), MoverStatus::mover(A, B, 5));
  EXPECT_EQ(classify_trajectory(runs({{A, 3}, {B, 2}, {A, 19}})), MoverStatus::unknown());
  EXPECT_EQ(classify_trajectory(runs({{A, 10}, {U, 1}, {A, 13}})), MoverStatus::unknown());
  EXPECT_EQ(classify_trajectory(runs({{U, 24}})), MoverStatus::unknown());
}

TEST(Classify, MinStay) {
  EXPECT_TRUE(min_stay_ok(MoverStatus::mover(A, B, 4)));
  EXPECT_TRUE(min_stay_ok(MoverStatus::mover(A, B, 20)));
  EXPECT_FALSE(min_stay_ok(MoverStatus::mover(A, B, 3)));
  EXPECT_FALSE(min_stay_ok(MoverStatus::mover(A, B, 21)));
  EXPECT_THROW(min_stay_ok(MoverStatus::non_mover(A)), ContractViolation);
}

TEST(Classify, EveryCleanSingleMoveRecovered) {
  for (int m = 1; m < 24; ++m) {
    const auto st = classify_trajectory(runs({{B, m}, {A, 24 - m}}));
    ASSERT_TRUE(st.is_mover());
    EXPECT_EQ(st.m, m);
    EXPECT_EQ(st.from, B);
    EXPECT_EQ(st.to, A);
  }
}

TEST(ClassifyProperty, SwappingEqualAdjacentMonthsIsNeutral) {
  Rng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<ProvinceId> v(24);
    const int cut = 1 + static_cast<int>(rng.below(23));
    for (int i = 0; i < 24; ++i) v[i] = rng.bernoulli(0.05) ? U : (i < cut ? A : B);
    const auto before = classify_trajectory(v);
    for (int i = 0; i + 1 < 24; ++i)
      if (v[i] == v[i + 1]) {
        std::swap(v[i], v[i + 1]);
        EXPECT_EQ(classify_trajectory(v), before);
      }
  }
}

TEST(StatusCounts, PartitionTotal) {
  std::vector<MoverStatus> st{MoverStatus::mover(A, B, 5), MoverStatus::non_mover(A), MoverStatus::unknown(),
                              MoverStatus::non_mover(B)};
  const auto c = count_statuses(st);
  EXPECT_EQ(c.movers, 1u);
  EXPECT_EQ(c.non_movers, 2u);
  EXPECT_EQ(c.unknown, 1u);
  EXPECT_EQ(c.total(), st.size());
}

TEST(CityHome, ConstrainedRecountInsideHomeProvince) {
  std::vector<TowerRecord> rows{{"ta1", {40, 0}, "A", "a1"},
                                {"ta2", {40, 1}, "A", "a2"},
                                {"ta3", {40, 2}, "A", "a3"},
                                {"tb4", {45, 0}, "B", "b4"}};
  const TowerRegistry reg = TowerRegistry::build(rows);
  const ProvinceId pa = *reg.province_id("A");
  auto ev = [&](const char* t) {
    const auto loc = reg.resolve(t);
    return LocatedEvent{kMonday, loc, 0, reg.find(t)->position};
  };
  std::vector<LocatedEvent> events;
  for (int i = 0; i < 6; ++i) events.push_back(ev("tb4"));
  for (int i = 0; i < 3; ++i) events.push_back(ev("ta1"));
  for (int i = 0; i < 2; ++i) events.push_back(ev("ta2"));
  for (int i = 0; i < 2; ++i) events.push_back(ev("ta3"));
  const CityHome h = city_home(events, pa, reg, HomeConfig{}, 3);
  EXPECT_TRUE(h.province_constrained);
  EXPECT_EQ(reg.city_code(h.city), "a1");

  std::vector<LocatedEvent> none{ev("tb4")};
  const CityHome u = city_home(none, pa, reg, HomeConfig{}, 3);
  EXPECT_EQ(u.city, kUnknown);
}
