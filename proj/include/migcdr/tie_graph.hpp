#pragma once
// Monthly alter call fractions, competition ranking, strong-tie detection
// around the moving month, and the ego-disjoint train/test split.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "migcdr/cdr_core.hpp"
#include "migcdr/home_inference.hpp"

namespace migcdr {

enum class RankingMode : std::uint8_t { competition, dense };
enum class ActivityMode : std::uint8_t { per_month, whole_window };

struct PairFilterConfig {
  int window_pre = 4;
  int window_post = 4;
  int top_k = 5;
  int persistence_months = 3;
  int min_stay = 4;
  RankingMode ranking = RankingMode::competition;
  ActivityMode activity = ActivityMode::per_month;
};

/// Calls between an ego and one alter in one month. `out` counts calls the
/// ego placed, `in` calls the alter placed.
struct AlterCount {
  UserId alter = 0;
  std::uint32_t out = 0;
  std::uint32_t in = 0;
  std::uint32_t count() const { return out + in; }
};

/// Per (user, month) call counts by alter (calls only) plus per-user monthly
/// activity bitmasks (calls or SMS, either direction).
class CallTable {
 public:
  CallTable() = default;

  explicit CallTable(const Dataset& ds) : users_(ds.user_count()), months_(ds.months) {
    const std::size_t cells = users_ * static_cast<std::size_t>(months_);
    activity_.assign(users_, 0);
    std::vector<std::size_t> per_user(users_ + 1, 0);
    for (const auto& r : ds.records) {
      const int m = ds.month_of(r);
      activity_[r.origin] |= 1u << m;
      activity_[r.peer] |= 1u << m;
      if (r.kind != EventKind::call) continue;
      ++per_user[r.caller() + 1];
      ++per_user[r.callee() + 1];
    }
    for (std::size_t i = 1; i < per_user.size(); ++i) per_user[i] += per_user[i - 1];
    // key = month << 33 | alter << 1 | (1 if the keyed user placed the call)
    std::vector<std::uint64_t> keys(per_user.back());
    std::vector<std::size_t> cursor(per_user.begin(), per_user.end() - 1);
    for (const auto& r : ds.records) {
      if (r.kind != EventKind::call) continue;
      const auto m = static_cast<std::uint64_t>(ds.month_of(r));
      const UserId a = r.caller(), b = r.callee();
      keys[cursor[a]++] = (m << 33) | (static_cast<std::uint64_t>(b) << 1) | 1u;
      keys[cursor[b]++] = (m << 33) | (static_cast<std::uint64_t>(a) << 1);
    }
    offsets_.assign(cells + 1, 0);
    totals_.assign(cells, 0);
    entries_.reserve(keys.size() / 4);
    for (std::size_t u = 0; u < users_; ++u) {
      auto first = keys.begin() + static_cast<std::ptrdiff_t>(per_user[u]);
      auto last = keys.begin() + static_cast<std::ptrdiff_t>(per_user[u + 1]);
      std::sort(first, last);
      std::size_t cell = u * static_cast<std::size_t>(months_);
      std::size_t filled = cell;  // cells whose start offset has been written
      for (auto it = first; it != last; ++it) {
        const auto month = static_cast<std::size_t>(*it >> 33);
        const auto alter = static_cast<UserId>((*it >> 1) & 0xffffffffULL);
        const bool placed = (*it & 1u) != 0;
        const std::size_t c = cell + month;
        while (filled <= c) offsets_[filled++] = entries_.size();
        if (entries_.size() == offsets_[c] || entries_.back().alter != alter) entries_.push_back({alter, 0, 0});
        if (placed) ++entries_.back().out;
        else ++entries_.back().in;
        ++totals_[c];
      }
      while (filled < cell + static_cast<std::size_t>(months_) + 1 && filled <= cells)
        offsets_[filled++] = entries_.size();
    }
    offsets_[cells] = entries_.size();
  }

  std::size_t users() const { return users_; }
  int months() const { return months_; }

  /// Alters of `user` in 0-based `month`, sorted by alter id.
  std::span<const AlterCount> alters(UserId user, int month) const {
    const std::size_t c = cell(user, month);
    return {entries_.data() + offsets_[c], offsets_[c + 1] - offsets_[c]};
  }

  std::uint32_t total(UserId user, int month) const { return totals_[cell(user, month)]; }

  AlterCount pair(UserId ego, UserId alter, int month) const {
    const auto list = alters(ego, month);
    auto it = std::lower_bound(list.begin(), list.end(), alter,
                               [](const AlterCount& a, UserId v) { return a.alter < v; });
    if (it == list.end() || it->alter != alter) return {alter, 0, 0};
    return *it;
  }

  std::uint32_t activity_mask(UserId user) const { return activity_[user]; }
  bool active(UserId user, int month) const { return (activity_[user] >> month) & 1u; }

 private:
  std::size_t cell(UserId user, int month) const {
    return static_cast<std::size_t>(user) * static_cast<std::size_t>(months_) + static_cast<std::size_t>(month);
  }

  std::size_t users_ = 0;
  int months_ = kWindowMonths;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> totals_;
  std::vector<AlterCount> entries_;
  std::vector<std::uint32_t> activity_;
};

struct AlterFraction {
  UserId alter = 0;
  std::uint32_t count = 0;
  double fraction = 0.0;
};

/// Alters of an ego-month with c_i / sum_j c_j, sorted by fraction descending
/// (alter id ascending on ties). Empty when the ego had no calls.
inline std::vector<AlterFraction> alter_fractions(std::span<const AlterCount> counts) {
  std::uint64_t total = 0;
  for (const auto& a : counts) total += a.count();
  std::vector<AlterFraction> out;
  if (total == 0) return out;
  for (const auto& a : counts)
    if (a.count() > 0)
      out.push_back({a.alter, a.count(), static_cast<double>(a.count()) / static_cast<double>(total)});
  std::sort(out.begin(), out.end(), [](const AlterFraction& x, const AlterFraction& y) {
    return x.fraction != y.fraction ? x.fraction > y.fraction : x.alter < y.alter;
  });
  return out;
}

inline std::vector<AlterFraction> alter_fractions(const CallTable& calls, UserId ego, int month) {
  return alter_fractions(calls.alters(ego, month));
}

/// Ranks aligned with `fractions`. Competition ranking gives tied values the
/// same rank and the next distinct value 1 + (number of strictly better
/// alters); dense ranking counts distinct better values instead.
inline std::vector<int> rank_alters(std::span<const double> fractions,
                                    RankingMode mode = RankingMode::competition) {
  std::vector<double> sorted(fractions.begin(), fractions.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> ranks;
  ranks.reserve(fractions.size());
  for (double f : fractions) {
    if (mode == RankingMode::competition) {
      const auto better = std::lower_bound(sorted.begin(), sorted.end(), f, std::greater<>()) - sorted.begin();
      ranks.push_back(static_cast<int>(better) + 1);
    } else {
      const auto better = std::lower_bound(distinct.begin(), distinct.end(), f, std::greater<>()) - distinct.begin();
      ranks.push_back(static_cast<int>(better) + 1);
    }
  }
  return ranks;
}

inline std::vector<int> rank_alters(std::span<const AlterFraction> fractions,
                                    RankingMode mode = RankingMode::competition) {
  std::vector<double> f;
  f.reserve(fractions.size());
  for (const auto& a : fractions) f.push_back(a.fraction);
  return rank_alters(f, mode);
}

/// Rank of `alter` in the ego's month, or 0 when the alter had no calls.
inline int alter_rank(const CallTable& calls, UserId ego, UserId alter, int month, RankingMode mode) {
  const auto fr = alter_fractions(calls, ego, month);
  const auto ranks = rank_alters(fr, mode);
  for (std::size_t i = 0; i < fr.size(); ++i)
    if (fr[i].alter == alter) return ranks[i];
  return 0;
}

struct StrongPair {
  UserId ego = 0;
  UserId alter = 0;
  int m = 0;  // 1-based (possibly dummy) moving month
  MoverStatus ego_status;
  MoverStatus alter_status;
};

enum class PairVerdict : std::uint8_t {
  included,
  window_out_of_range,
  ego_min_stay,
  not_persistent,
  alter_not_non_mover,
  demographics_unknown,
  trajectory_unknown,
  ego_inactive,
  alter_inactive,
};

inline const char* verdict_name(PairVerdict v) {
  switch (v) {
    case PairVerdict::included: return "included";
    case PairVerdict::window_out_of_range: return "window_out_of_range";
    case PairVerdict::ego_min_stay: return "ego_min_stay";
    case PairVerdict::not_persistent: return "not_persistent";
    case PairVerdict::alter_not_non_mover: return "alter_not_non_mover";
    case PairVerdict::demographics_unknown: return "demographics_unknown";
    case PairVerdict::trajectory_unknown: return "trajectory_unknown";
    case PairVerdict::ego_inactive: return "ego_inactive";
    case PairVerdict::alter_inactive: return "alter_inactive";
  }
  return "?";
}

/// An alter ranked within top_k in month m, with the outcome of every filter.
struct PairCandidate {
  UserId ego = 0;
  UserId alter = 0;
  int m = 0;
  PairVerdict verdict = PairVerdict::included;
  std::vector<int> ranks;  // ranks in months m-p+1..m (0 = no calls)
};

struct TieContext {
  const Dataset& dataset;
  const CallTable& calls;
  std::span<const MoverStatus> statuses;
};

namespace detail {
inline bool active_over(const CallTable& calls, UserId u, int lo, int hi, ActivityMode mode) {
  // lo/hi are 0-based inclusive month indices
  if (mode == ActivityMode::per_month) {
    for (int m = lo; m <= hi; ++m)
      if (!calls.active(u, m)) return false;
    return true;
  }
  for (int m = lo; m <= hi; ++m)
    if (calls.active(u, m)) return true;
  return false;
}
}  // namespace detail

/// Evaluates every alter ranked within top_k in month m (1-based) against the
/// persistence, status, demographic and activity filters.
inline std::vector<PairCandidate> candidate_pairs(const TieContext& ctx, UserId ego, int m,
                                                  const PairFilterConfig& cfg) {
  std::vector<PairCandidate> out;
  const int months = ctx.calls.months();
  if (m < 1 || m > months) return out;
  const auto frac_m = alter_fractions(ctx.calls, ego, m - 1);
  const auto ranks_m = rank_alters(frac_m, cfg.ranking);
  const bool window_ok = m - cfg.window_pre >= 1 && m + cfg.window_post <= months &&
                         m - cfg.persistence_months + 1 >= 1;
  for (std::size_t i = 0; i < frac_m.size(); ++i) {
    if (ranks_m[i] > cfg.top_k) continue;
    PairCandidate c{ego, frac_m[i].alter, m, PairVerdict::included, {}};
    if (!window_ok) {
      c.verdict = PairVerdict::window_out_of_range;
      out.push_back(std::move(c));
      continue;
    }
    bool persistent = true;
    for (int k = m - cfg.persistence_months + 1; k <= m; ++k) {
      const int r = k == m ? ranks_m[i] : alter_rank(ctx.calls, ego, c.alter, k - 1, cfg.ranking);
      c.ranks.push_back(r);
      if (r == 0 || r > cfg.top_k) persistent = false;
    }
    const auto& es = ctx.statuses[ego];
    const auto& as = ctx.statuses[c.alter];
    if (!persistent) c.verdict = PairVerdict::not_persistent;
    else if (!as.is_non_mover()) c.verdict = PairVerdict::alter_not_non_mover;
    else if (!ctx.dataset.profiles[ego].known() || !ctx.dataset.profiles[c.alter].known())
      c.verdict = PairVerdict::demographics_unknown;
    else if (es.kind == MoverStatus::Kind::unknown || as.kind == MoverStatus::Kind::unknown)
      c.verdict = PairVerdict::trajectory_unknown;
    else if (!detail::active_over(ctx.calls, ego, m - 1 - cfg.window_pre, m - 1 + cfg.window_post, cfg.activity))
      c.verdict = PairVerdict::ego_inactive;
    else if (!detail::active_over(ctx.calls, c.alter, m - 1 - cfg.window_pre, m - 1 + cfg.window_post, cfg.activity))
      c.verdict = PairVerdict::alter_inactive;
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const PairCandidate& a, const PairCandidate& b) { return a.alter < b.alter; });
  return out;
}

struct StrongPairResult {
  std::vector<StrongPair> pairs;            // sorted by (ego, alter)
  std::vector<PairCandidate> diagnostics;   // every evaluated candidate
};

/// Strong ties of mover egos: non-mover alters in the ego's top_k for months
/// m-2, m-1, m that pass every pair filter.
inline StrongPairResult find_strong_pairs(const TieContext& ctx, const PairFilterConfig& cfg,
                                          unsigned threads = 1) {
  const std::size_t n = ctx.statuses.size();
  std::vector<std::vector<PairCandidate>> per_ego(n);
  parallel_for(n, threads, [&](std::size_t u) {
    const auto& s = ctx.statuses[u];
    if (!s.is_mover()) return;
    auto cands = candidate_pairs(ctx, static_cast<UserId>(u), s.m, cfg);
    if (!min_stay_ok(s, cfg.min_stay, ctx.calls.months()))
      for (auto& c : cands)
        if (c.verdict == PairVerdict::included || c.verdict == PairVerdict::not_persistent)
          c.verdict = PairVerdict::ego_min_stay;
    per_ego[u] = std::move(cands);
  });
  StrongPairResult res;
  for (auto& cands : per_ego) {
    for (auto& c : cands) {
      if (c.verdict == PairVerdict::included)
        res.pairs.push_back({c.ego, c.alter, c.m, ctx.statuses[c.ego], ctx.statuses[c.alter]});
      res.diagnostics.push_back(std::move(c));
    }
  }
  return res;
}

/// Non-mover alters of `ego` that would form a strong pair if `ego` had moved
/// in month m. Used to build the dummy-month control set.
inline std::vector<UserId> strong_alters_at(const TieContext& ctx, UserId ego, int m,
                                            const PairFilterConfig& cfg) {
  std::vector<UserId> out;
  for (const auto& c : candidate_pairs(ctx, ego, m, cfg))
    if (c.verdict == PairVerdict::included) out.push_back(c.alter);
  return out;
}

struct EgoSplit {
  std::vector<std::size_t> train;  // indices into the pair list
  std::vector<std::size_t> test;
  std::vector<UserId> train_egos;  // sorted
  std::vector<UserId> test_egos;   // sorted
};

/// Partitions unique egos at `train_fraction` and assigns every pair to its
/// ego's side. Deterministic under `seed`.
inline EgoSplit split_by_ego(std::span<const UserId> pair_egos, double train_fraction,
                             std::uint64_t seed) {
  std::vector<UserId> egos(pair_egos.begin(), pair_egos.end());
  std::sort(egos.begin(), egos.end());
  egos.erase(std::unique(egos.begin(), egos.end()), egos.end());
  if (egos.size() < 2) throw ParameterError("train/test split needs at least 2 unique egos");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("train_fraction must be in (0,1)");
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(egos.begin(), egos.end());
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(egos.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, egos.size() - 1);
  EgoSplit split;
  split.train_egos.assign(egos.begin(), egos.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_egos.assign(egos.begin() + static_cast<std::ptrdiff_t>(n_train), egos.end());
  std::sort(split.train_egos.begin(), split.train_egos.end());
  std::sort(split.test_egos.begin(), split.test_egos.end());
  for (std::size_t i = 0; i < pair_egos.size(); ++i) {
    if (std::binary_search(split.train_egos.begin(), split.train_egos.end(), pair_egos[i]))
      split.train.push_back(i);
    else
      split.test.push_back(i);
  }
  return split;
}

inline EgoSplit split_by_ego(std::span<const StrongPair> pairs, double train_fraction,
                             std::uint64_t seed) {
  std::vector<UserId> egos;
  egos.reserve(pairs.size());
  for (const auto& p : pairs) egos.push_back(p.ego);
  return split_by_ego(egos, train_fraction, seed);
}

}  // namespace migcdr
