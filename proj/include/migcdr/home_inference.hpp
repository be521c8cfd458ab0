#pragma once
// Daily and monthly modal locations, 24-month province trajectories, and the
// run-length mover classification.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "migcdr/cdr_core.hpp"

namespace migcdr {

struct HomeConfig {
  /// ISO weekdays (Mon=1..Sun=7) excluded from the monthly vote.
  std::vector<unsigned> weekend_days{6, 7};
  /// Optional local-hour window [start, end) (wrapping past midnight allowed)
  /// restricting which events locate a user. Off by default.
  std::optional<std::pair<unsigned, unsigned>> night_only;
  std::uint64_t seed = 0;

  bool is_weekday(std::int64_t day) const {
    const unsigned wd = iso_weekday(day);
    return std::find(weekend_days.begin(), weekend_days.end(), wd) == weekend_days.end();
  }

  bool hour_allowed(unsigned hour) const {
    if (!night_only) return true;
    const auto [lo, hi] = *night_only;
    return lo <= hi ? (hour >= lo && hour < hi) : (hour >= lo || hour < hi);
  }
};

/// Most frequent value, with kUnknown competing as an ordinary category.
/// Ties are broken by a uniform draw seeded with `tie_seed` over the tied
/// values in ascending order. Empty input yields nullopt.
inline std::optional<std::int32_t> modal_value(std::span<const std::int32_t> values,
                                               std::uint64_t tie_seed) {
  if (values.empty()) return std::nullopt;
  std::vector<std::int32_t> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::int32_t> best;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::size_t c = j - i;
    if (c > best_count) {
      best_count = c;
      best.assign(1, sorted[i]);
    } else if (c == best_count) {
      best.push_back(sorted[i]);
    }
    i = j;
  }
  if (best.size() == 1) return best.front();
  Rng rng(tie_seed);
  return best[rng.below(best.size())];
}

/// Daily most common province among one user's outgoing events of one day.
inline std::optional<ProvinceId> daily_modal_province(std::span<const ProvinceId> provinces,
                                                      std::uint64_t tie_seed) {
  return modal_value(provinces, tie_seed);
}

struct DailyLocation {
  std::int64_t day;  // days since epoch, local calendar
  std::int32_t value;
};

/// Modal daily location over the weekdays of one month; unknown when the
/// month has no weekday entries.
inline std::int32_t monthly_home(std::span<const DailyLocation> daily, const HomeConfig& cfg,
                                 std::uint64_t tie_seed) {
  std::vector<std::int32_t> weekday_values;
  for (const auto& d : daily)
    if (cfg.is_weekday(d.day)) weekday_values.push_back(d.value);
  return modal_value(weekday_values, tie_seed).value_or(kUnknown);
}

struct HomeTrajectory {
  UserId user = 0;
  std::vector<ProvinceId> months;  // months[i] = home in window_start + i
};

struct MoverStatus {
  enum class Kind : std::uint8_t { unknown = 0, non_mover = 1, mover = 2 };

  Kind kind = Kind::unknown;
  ProvinceId from = kUnknown;  // non-movers: their province
  ProvinceId to = kUnknown;
  int m = 0;  // months spent in `from` (estimated moving month), 1-based

  static MoverStatus unknown() { return {}; }
  static MoverStatus non_mover(ProvinceId p) { return {Kind::non_mover, p, kUnknown, 0}; }
  static MoverStatus mover(ProvinceId a, ProvinceId b, int m) { return {Kind::mover, a, b, m}; }

  bool is_mover() const { return kind == Kind::mover; }
  bool is_non_mover() const { return kind == Kind::non_mover; }
  friend bool operator==(const MoverStatus&, const MoverStatus&) = default;
};

inline const char* status_name(MoverStatus::Kind k) {
  switch (k) {
    case MoverStatus::Kind::mover: return "mover";
    case MoverStatus::Kind::non_mover: return "non_mover";
    default: return "unknown";
  }
}

/// Run-length classification: [(P, n)] -> non-mover, [(P1, m), (P2, n-m)] with
/// both known -> mover, anything else (unknown months, three or more runs,
/// return trips) -> unknown.
inline MoverStatus classify_trajectory(std::span<const ProvinceId> months) {
  if (months.empty()) return MoverStatus::unknown();
  std::vector<std::pair<ProvinceId, int>> runs;
  for (ProvinceId p : months) {
    if (p == kUnknown) return MoverStatus::unknown();
    if (runs.empty() || runs.back().first != p) runs.emplace_back(p, 1);
    else ++runs.back().second;
  }
  if (runs.size() == 1) return MoverStatus::non_mover(runs[0].first);
  if (runs.size() == 2) return MoverStatus::mover(runs[0].first, runs[1].first, runs[0].second);
  return MoverStatus::unknown();
}

/// True iff the mover spent at least `min_months` in each home location.
inline bool min_stay_ok(const MoverStatus& status, int min_months = 4,
                        int n_months = kWindowMonths) {
  if (!status.is_mover()) throw ContractViolation("min_stay_ok requires a mover status");
  return status.m >= min_months && n_months - status.m >= min_months;
}

/// Per-user outgoing events in timestamp order (compressed row layout).
class OutgoingIndex {
 public:
  OutgoingIndex() = default;

  explicit OutgoingIndex(const Dataset& ds) {
    offsets_.assign(ds.user_count() + 1, 0);
    for (const auto& r : ds.records)
      if (r.direction == Direction::outgoing) ++offsets_[r.origin + 1];
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    events_.resize(offsets_.back());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const auto& r = ds.records[i];
      if (r.direction == Direction::outgoing) events_[cursor[r.origin]++] = static_cast<std::uint32_t>(i);
    }
  }

  std::span<const std::uint32_t> of(UserId u) const {
    return {events_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> events_;
};

/// Province-level trajectory of one user from their outgoing events.
inline HomeTrajectory infer_trajectory(const Dataset& ds, const OutgoingIndex& index, UserId user,
                                       const HomeConfig& cfg) {
  HomeTrajectory traj{user, std::vector<ProvinceId>(static_cast<std::size_t>(ds.months), kUnknown)};
  const std::uint64_t user_tag = fnv1a64(ds.users[user]);
  std::vector<std::vector<DailyLocation>> daily(static_cast<std::size_t>(ds.months));
  std::vector<ProvinceId> day_values;
  const auto events = index.of(user);
  for (std::size_t i = 0; i < events.size();) {
    const std::int64_t day = ds.clock.day(ds.records[events[i]].timestamp);
    day_values.clear();
    std::size_t j = i;
    for (; j < events.size(); ++j) {
      const auto& r = ds.records[events[j]];
      if (ds.clock.day(r.timestamp) != day) break;
      if (!cfg.hour_allowed(ds.clock.hour(r.timestamp))) continue;
      day_values.push_back(ds.resolve_location(r.tower).province);
    }
    const int month = ds.month_of(ds.records[events[i]]);
    if (auto p = daily_modal_province(day_values, derive_seed(cfg.seed, "daily", user_tag, day));
        p && month >= 0 && month < ds.months) {
      daily[static_cast<std::size_t>(month)].push_back({day, *p});
    }
    i = j;
  }
  for (int m = 0; m < ds.months; ++m) {
    traj.months[static_cast<std::size_t>(m)] =
        monthly_home(daily[static_cast<std::size_t>(m)], cfg, derive_seed(cfg.seed, "monthly", user_tag, m));
  }
  return traj;
}

inline std::vector<HomeTrajectory> infer_trajectories(const Dataset& ds, const OutgoingIndex& index,
                                                      const HomeConfig& cfg, unsigned threads = 1) {
  std::vector<HomeTrajectory> out(ds.user_count());
  parallel_for(ds.user_count(), threads, [&](std::size_t u) {
    out[u] = infer_trajectory(ds, index, static_cast<UserId>(u), cfg);
  });
  return out;
}

struct StatusCounts {
  std::size_t movers = 0;
  std::size_t non_movers = 0;
  std::size_t unknown = 0;
  std::size_t total() const { return movers + non_movers + unknown; }
};

inline StatusCounts count_statuses(std::span<const MoverStatus> statuses) {
  StatusCounts c;
  for (const auto& s : statuses) {
    if (s.is_mover()) ++c.movers;
    else if (s.is_non_mover()) ++c.non_movers;
    else ++c.unknown;
  }
  return c;
}

// ---------------------------------------------------------------------------
// City-level homes

struct CityHome {
  UserId user = 0;
  int month = 0;  // 0-based month index
  CityId city = kUnknown;
  bool province_constrained = false;
  /// Centroid of the distinct towers the user used in `city` that month.
  std::optional<GeoPoint> point;
};

/// One outgoing event reduced to what city-level inference needs.
struct LocatedEvent {
  std::int64_t day;
  Location location;
  TowerId tower = kNoTower;
  std::optional<GeoPoint> point;
};

/// City-level home for one user-month. Runs the daily/weekday-monthly modal
/// procedure on cities; if the winner is unknown or lies outside
/// `home_province`, recounts the most common city among events resolved to
/// `home_province` and marks the result as province-constrained.
inline CityHome city_home(std::span<const LocatedEvent> events, ProvinceId home_province,
                          const TowerRegistry& registry, const HomeConfig& cfg,
                          std::uint64_t tie_seed) {
  CityHome home;
  std::vector<DailyLocation> daily;
  std::vector<CityId> day_values;
  for (std::size_t i = 0; i < events.size();) {
    std::size_t j = i;
    day_values.clear();
    for (; j < events.size() && events[j].day == events[i].day; ++j)
      day_values.push_back(events[j].location.city);
    if (auto c = modal_value(day_values, derive_seed(tie_seed, "daily", events[i].day)))
      daily.push_back({events[i].day, *c});
    i = j;
  }
  CityId winner = monthly_home(daily, cfg, derive_seed(tie_seed, "monthly"));
  if (winner == kUnknown || registry.city_province(winner) != home_province) {
    home.province_constrained = true;
    std::vector<CityId> subset;
    for (const auto& e : events)
      if (e.location.province == home_province && e.location.city != kUnknown)
        subset.push_back(e.location.city);
    winner = modal_value(subset, derive_seed(tie_seed, "constrained")).value_or(kUnknown);
  }
  home.city = winner;
  if (winner != kUnknown) {
    std::vector<std::pair<TowerId, GeoPoint>> used;
    for (const auto& e : events)
      if (e.location.city == winner && e.point) used.emplace_back(e.tower, *e.point);
    std::sort(used.begin(), used.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    used.erase(std::unique(used.begin(), used.end(),
                           [](const auto& a, const auto& b) { return a.first == b.first; }),
               used.end());
    if (!used.empty()) {
      GeoPoint c{0.0, 0.0};
      for (const auto& [t, p] : used) {
        c.lat += p.lat;
        c.lon += p.lon;
      }
      c.lat /= static_cast<double>(used.size());
      c.lon /= static_cast<double>(used.size());
      home.point = c;
    }
  }
  return home;
}

/// City-level home of `user` in 0-based `month`, given the province-level
/// home of that month.
inline CityHome city_home(const Dataset& ds, const OutgoingIndex& index, UserId user, int month,
                          ProvinceId home_province, const HomeConfig& cfg) {
  std::vector<LocatedEvent> events;
  for (auto idx : index.of(user)) {
    const auto& r = ds.records[idx];
    if (ds.month_of(r) != month || !cfg.hour_allowed(ds.clock.hour(r.timestamp))) continue;
    events.push_back({ds.clock.day(r.timestamp), ds.resolve_location(r.tower), r.tower,
                      r.tower == kNoTower ? std::nullopt : ds.tower_point[static_cast<std::size_t>(r.tower)]});
  }
  CityHome home = city_home(events, home_province, ds.registry, cfg,
                            derive_seed(cfg.seed, "city", fnv1a64(ds.users[user]), month));
  home.user = user;
  home.month = month;
  return home;
}

}  // namespace migcdr
