#include <gtest/gtest.h>

#include <map>
#include <set>

#include "migcdr/home_inference.hpp"
#include "migcdr/synth_gen.hpp"
#include "migcdr/tie_graph.hpp"

using namespace migcdr;

namespace {

struct World {
  SynthOutput synth;
  Dataset ds;
  std::vector<MoverStatus> statuses;
};

const World& small_world() {
  static const World w = [] {
    World w;
    SynthConfig sc;
    sc.n_users = 700;
    sc.mover_fraction = 0.06;
    sc.seed = 99;
    w.synth = generate(sc);
    w.ds = synth_dataset(w.synth, sc);
    const OutgoingIndex idx(w.ds);
    for (const auto& t : infer_trajectories(w.ds, idx, HomeConfig{})) w.statuses.push_back(classify_trajectory(t.months));
    return w;
  }();
  return w;
}

// Competition rank by counting strictly larger values.
std::vector<int> rank_oracle(const std::vector<double>& f) {
  std::vector<int> r;
  for (double x : f) r.push_back(1 + static_cast<int>(std::count_if(f.begin(), f.end(), [&](double y) { return y > x; })));
  return r;
}

}  // namespace

TEST(RankAlters, DocumentedTies) {
  const std::vector<double> f{0.417, 0.25, 0.25, 0.083};
  EXPECT_EQ(rank_alters(f), (std::vector<int>{1, 2, 2, 4}));
  EXPECT_EQ(rank_alters(f, RankingMode::dense), (std::vector<int>{1, 2, 2, 3}));
}

TEST(RankAlters, DistinctFractionsMatchSortOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> f(5);
    for (auto& x : f) x = rng.uniform();
    std::vector<double> sorted = f;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto r = rank_alters(f);
    for (std::size_t i = 0; i < f.size(); ++i)
      EXPECT_EQ(r[i], 1 + std::find(sorted.begin(), sorted.end(), f[i]) - sorted.begin());
  }
}

TEST(RankAlters, TiedFractionsMatchCountingOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> f(1 + rng.below(12));
    for (auto& x : f) x = static_cast<double>(rng.below(4)) / 4.0;
    EXPECT_EQ(rank_alters(f), rank_oracle(f));
  }
}

TEST(CallTable, MatchesRecordScan) {
  const World& w = small_world();
  const CallTable calls(w.ds);
  std::map<std::tuple<UserId, UserId, int>, std::pair<std::uint32_t, std::uint32_t>> scan;
  std::map<std::pair<UserId, int>, std::uint32_t> totals;
  for (const auto& r : w.ds.records) {
    if (r.kind != EventKind::call) continue;
    const int m = w.ds.month_of(r);
    ++scan[{r.caller(), r.callee(), m}].first;
    ++scan[{r.callee(), r.caller(), m}].second;
    ++totals[{r.caller(), m}];
    ++totals[{r.callee(), m}];
  }
  const std::vector<std::pair<std::tuple<UserId, UserId, int>, std::pair<std::uint32_t, std::uint32_t>>> cells(scan.begin(),
                                                                                                          scan.end());
  Rng rng(8);
  for (int q = 0; q < 3000; ++q) {
    const auto it = &cells[rng.below(cells.size())];
    const auto [ego, alter, m] = it->first;
    const AlterCount c = calls.pair(ego, alter, m);
    EXPECT_EQ(c.out, it->second.first);
    EXPECT_EQ(c.in, it->second.second);
    EXPECT_EQ(calls.total(ego, m), (totals[{ego, m}]));
  }
}

TEST(StrongPairs, MatchBruteForceRules) {
  const World& w = small_world();
  const CallTable calls(w.ds);
  const TieContext ctx{w.ds, calls, w.statuses};
  const PairFilterConfig cfg;
  const auto got = find_strong_pairs(ctx, cfg);

  const int M = w.ds.months;
  std::vector<std::vector<std::map<UserId, int>>> cnt(w.ds.user_count(), std::vector<std::map<UserId, int>>(M));
  std::vector<std::vector<bool>> active(w.ds.user_count(), std::vector<bool>(M, false));
  for (const auto& r : w.ds.records) {
    const int m = w.ds.month_of(r);
    active[r.origin][m] = active[r.peer][m] = true;
    if (r.kind != EventKind::call) continue;
    ++cnt[r.caller()][m][r.callee()];
    ++cnt[r.callee()][m][r.caller()];
  }
  auto rank = [&](UserId e, UserId a, int month) {
    const auto& mm = cnt[e][month];
    auto it = mm.find(a);
    if (it == mm.end()) return 0;
    int better = 0;
    for (const auto& [x, c] : mm) better += c > it->second;
    return better + 1;
  };
  std::set<std::pair<UserId, UserId>> want;
  for (UserId e = 0; e < w.ds.user_count(); ++e) {
    const auto& s = w.statuses[e];
    if (!s.is_mover() || s.m < 4 || M - s.m < 4 || s.m - 4 < 1 || s.m + 4 > M) continue;
    for (const auto& [a, c] : cnt[e][s.m - 1]) {
      bool ok = w.statuses[a].is_non_mover() && w.ds.profiles[e].known() && w.ds.profiles[a].known();
      for (int k = s.m - 3; k <= s.m - 1 && ok; ++k) ok = rank(e, a, k) >= 1 && rank(e, a, k) <= 5;
      for (int k = s.m - 5; k <= s.m + 3 && ok; ++k) ok = active[e][k] && active[a][k];
      if (ok) want.insert({e, a});
    }
  }
  std::set<std::pair<UserId, UserId>> have;
  for (const auto& p : got.pairs) have.insert({p.ego, p.alter});
  EXPECT_FALSE(want.empty());
  EXPECT_EQ(have, want);
}

TEST(StrongPairs, UnknownGenderEgoExcluded) {
  World w = small_world();
  const CallTable calls(w.ds);
  const auto base = find_strong_pairs({w.ds, calls, w.statuses}, PairFilterConfig{});
  ASSERT_FALSE(base.pairs.empty());
  const UserId ego = base.pairs.front().ego;
  w.ds.profiles[ego].gender = Gender::unknown;
  const auto after = find_strong_pairs({w.ds, calls, w.statuses}, PairFilterConfig{});
  for (const auto& p : after.pairs) EXPECT_NE(p.ego, ego);
  bool flagged = false;
  for (const auto& c : after.diagnostics) flagged = flagged || (c.ego == ego && c.verdict == PairVerdict::demographics_unknown);
  EXPECT_TRUE(flagged);
}

TEST(SplitByEgo, DisjointCoveringAndDeterministic) {
  Rng rng(21);
  std::vector<UserId> egos;
  for (int i = 0; i < 300; ++i) egos.push_back(static_cast<UserId>(rng.below(80)));
  const EgoSplit a = split_by_ego(egos, 0.7, 5), b = split_by_ego(egos, 0.7, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.train.size() + a.test.size(), egos.size());
  for (std::size_t i : a.train)
    EXPECT_FALSE(std::binary_search(a.test_egos.begin(), a.test_egos.end(), egos[i]));
  for (std::size_t i : a.test)
    EXPECT_TRUE(std::binary_search(a.test_egos.begin(), a.test_egos.end(), egos[i]));
  const double share = double(a.train_egos.size()) / double(a.train_egos.size() + a.test_egos.size());
  EXPECT_NEAR(share, 0.7, 0.02);
  EXPECT_THROW(split_by_ego(std::vector<UserId>{1, 1}, 0.7, 1), ParameterError);
}
