#pragma once
// Per-pair monthly series aligned to the moving month, standardization,
// Spearman correlation, and pre/post summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "migcdr/tie_graph.hpp"

namespace migcdr {

enum class Trend : std::uint8_t { rise, decay };
enum class Quantity : std::uint8_t { count, fraction, reciprocity };
enum class T0Mode : std::uint8_t { neither, pre, post };

inline const char* trend_name(Trend t) { return t == Trend::rise ? "rise" : "decay"; }
inline const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::count: return "count";
    case Quantity::fraction: return "fraction";
    case Quantity::reciprocity: return "reciprocity";
  }
  return "?";
}

struct PairSeries {
  StrongPair pair;
  int t_lo = -4;
  std::vector<std::uint32_t> count;
  std::vector<std::uint32_t> ego_total;
  std::vector<double> fraction;
  std::vector<std::optional<double>> reciprocity;
  bool fraction_undefined = false;  // some month had no ego calls at all

  std::size_t length() const { return count.size(); }
  int t_at(std::size_t i) const { return t_lo + static_cast<int>(i); }

  std::vector<double> values(Quantity q) const {
    std::vector<double> v(length());
    for (std::size_t i = 0; i < v.size(); ++i) {
      switch (q) {
        case Quantity::count: v[i] = count[i]; break;
        case Quantity::fraction: v[i] = fraction[i]; break;
        case Quantity::reciprocity: v[i] = reciprocity[i].value_or(0.0); break;
      }
    }
    return v;
  }
};

/// Reciprocity of one month: (c_ego->alter - c_alter->ego) / c_ego<->alter.
inline std::optional<double> reciprocity(std::uint32_t ego_to_alter, std::uint32_t alter_to_ego) {
  const std::uint32_t total = ego_to_alter + alter_to_ego;
  if (total == 0) return std::nullopt;
  return (static_cast<double>(ego_to_alter) - static_cast<double>(alter_to_ego)) / total;
}

/// Series over calendar months m-pre..m+post (m 1-based).
inline PairSeries build_series(const CallTable& calls, const StrongPair& pair, int pre = 4, int post = 4) {
  if (pair.m - pre < 1 || pair.m + post > calls.months())
    throw ContractViolation("series window outside observation span");
  PairSeries s;
  s.pair = pair;
  s.t_lo = -pre;
  for (int t = -pre; t <= post; ++t) {
    const int month = pair.m - 1 + t;
    const AlterCount c = calls.pair(pair.ego, pair.alter, month);
    const std::uint32_t total = calls.total(pair.ego, month);
    s.count.push_back(c.count());
    s.ego_total.push_back(total);
    if (total > 0) {
      s.fraction.push_back(static_cast<double>(c.count()) / total);
    } else {
      s.fraction.push_back(0.0);
      s.fraction_undefined = true;
    }
    s.reciprocity.push_back(reciprocity(c.out, c.in));
  }
  return s;
}

inline std::vector<PairSeries> build_all_series(const CallTable& calls, std::span<const StrongPair> pairs,
                                                int pre = 4, int post = 4, unsigned threads = 1) {
  std::vector<PairSeries> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = build_series(calls, pairs[i], pre, post); });
  return out;
}

struct StandardizedSeries {
  std::vector<double> values;
  bool was_constant = false;
};

/// (x - mean) / sigma with the population standard deviation.
inline StandardizedSeries standardize(std::span<const double> x) {
  StandardizedSeries out;
  out.values.assign(x.size(), 0.0);
  if (x.empty()) {
    out.was_constant = true;
    return out;
  }
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
  if (constant || !(sd > 0.0)) {
    out.was_constant = true;
    return out;
  }
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = (x[i] - mean) / sd;
  return out;
}

/// Average (mid) ranks, 1-based.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = mid;
    i = j + 1;
  }
  return r;
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson correlation of midranks; missing when either side is constant.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

struct CorrMatrix {
  int n = 0;
  int t_lo = -4;
  std::vector<std::optional<double>> cells;

  std::optional<double> at(int s, int t) const { return cells[static_cast<std::size_t>(s * n + t)]; }
};

/// Spearman correlation across pairs between every two months of the series.
inline CorrMatrix month_correlation_matrix(std::span<const PairSeries> series, Quantity q) {
  CorrMatrix cm;
  if (series.empty()) return cm;
  cm.n = static_cast<int>(series.front().length());
  cm.t_lo = series.front().t_lo;
  cm.cells.assign(static_cast<std::size_t>(cm.n * cm.n), std::nullopt);
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(cm.n), std::vector<double>(series.size()));
  for (std::size_t p = 0; p < series.size(); ++p) {
    const auto v = series[p].values(q);
    for (int t = 0; t < cm.n; ++t) cols[static_cast<std::size_t>(t)][p] = v[static_cast<std::size_t>(t)];
  }
  for (int s = 0; s < cm.n; ++s) {
    cm.cells[static_cast<std::size_t>(s * cm.n + s)] = 1.0;
    for (int t = s + 1; t < cm.n; ++t) {
      const auto rho = series.size() >= 3 ? spearman(cols[static_cast<std::size_t>(s)], cols[static_cast<std::size_t>(t)])
                                          : std::nullopt;
      cm.cells[static_cast<std::size_t>(s * cm.n + t)] = rho;
      cm.cells[static_cast<std::size_t>(t * cm.n + s)] = rho;
    }
  }
  return cm;
}

/// Mean off-diagonal correlation within the pre and post blocks minus the
/// mean correlation across them. t = 0 belongs to neither block.
inline std::optional<double> block_contrast(const CorrMatrix& cm) {
  double within = 0, cross = 0;
  int nw = 0, nc = 0;
  for (int s = 0; s < cm.n; ++s) {
    for (int t = 0; t < cm.n; ++t) {
      if (s == t) continue;
      const int ts = cm.t_lo + s, tt = cm.t_lo + t;
      if (ts == 0 || tt == 0) continue;
      const auto v = cm.at(s, t);
      if (!v) continue;
      if ((ts < 0) == (tt < 0)) {
        within += *v;
        ++nw;
      } else {
        cross += *v;
        ++nc;
      }
    }
  }
  if (nw == 0 || nc == 0) return std::nullopt;
  return within / nw - cross / nc;
}

/// Frozen block-contrast thresholds: regime-shift sets reach at least the
/// first, stationary sets stay at or below the second.
inline constexpr double kBlockContrastShiftMin = 0.2;
inline constexpr double kBlockContrastStationaryMax = 0.05;

struct PrePostSummary {
  double pre_count = 0, post_count = 0;
  double pre_frac = 0, post_frac = 0;
  double pre_recip = 0, post_recip = 0;
  Trend direction_count = Trend::rise;
  Trend direction_frac = Trend::rise;
};

inline Trend trend_of(double pre, double post) { return post < pre ? Trend::decay : Trend::rise; }

/// Means over the pre-move (t < 0) and post-move (t > 0) months.
inline PrePostSummary summarize(const PairSeries& s, T0Mode t0 = T0Mode::neither) {
  double sums[6] = {};
  int n_pre = 0, n_post = 0, nr_pre = 0, nr_post = 0;
  for (std::size_t i = 0; i < s.length(); ++i) {
    const int t = s.t_at(i);
    const bool pre = t < 0 || (t == 0 && t0 == T0Mode::pre);
    const bool post = t > 0 || (t == 0 && t0 == T0Mode::post);
    if (!pre && !post) continue;
    const int base = pre ? 0 : 1;
    sums[base] += s.count[i];
    sums[2 + base] += s.fraction[i];
    if (s.reciprocity[i]) {
      sums[4 + base] += *s.reciprocity[i];
      ++(pre ? nr_pre : nr_post);
    }
    ++(pre ? n_pre : n_post);
  }
  PrePostSummary out;
  if (n_pre > 0) {
    out.pre_count = sums[0] / n_pre;
    out.pre_frac = sums[2] / n_pre;
  }
  if (n_post > 0) {
    out.post_count = sums[1] / n_post;
    out.post_frac = sums[3] / n_post;
  }
  out.pre_recip = nr_pre > 0 ? sums[4] / nr_pre : 0.0;
  out.post_recip = nr_post > 0 ? sums[5] / nr_post : 0.0;
  out.direction_count = trend_of(out.pre_count, out.post_count);
  out.direction_frac = trend_of(out.pre_frac, out.post_frac);
  return out;
}

}  // namespace migcdr
