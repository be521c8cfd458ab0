#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace migcdr {

// Proleptic Gregorian day/civil conversions.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

constexpr bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
  constexpr unsigned table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : table[m - 1];
}

/// ISO weekday, Monday = 1 ... Sunday = 7.
constexpr unsigned iso_weekday(std::int64_t days) {
  const auto r = static_cast<unsigned>(((days % 7) + 7) % 7);  // 0 = Thursday
  return (r + 3) % 7 + 1;
}

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}

struct YearMonth {
  std::int64_t year = 2008;
  unsigned month = 1;

  friend constexpr bool operator==(const YearMonth&, const YearMonth&) = default;

  /// Month offset of `other` relative to this month.
  constexpr std::int64_t months_until(const YearMonth& other) const {
    return (other.year - year) * 12 + (static_cast<std::int64_t>(other.month) - month);
  }

  constexpr YearMonth plus(std::int64_t months) const {
    const std::int64_t idx = year * 12 + (month - 1) + months;
    return {floor_div(idx, 12), static_cast<unsigned>(idx - floor_div(idx, 12) * 12) + 1};
  }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04lld-%02u", static_cast<long long>(year), month);
    return buf;
  }
};

namespace detail {
template <typename T>
inline bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, T& out) {
  if (pos + len > s.size()) return false;
  const char* b = s.data() + pos;
  const char* e = b + len;
  for (const char* p = b; p != e; ++p)
    if (*p < '0' || *p > '9') return false;
  return std::from_chars(b, e, out).ec == std::errc{};
}
}  // namespace detail

inline std::optional<YearMonth> parse_year_month(std::string_view s) {
  YearMonth ym;
  if (s.size() != 7 || s[4] != '-') return std::nullopt;
  if (!detail::parse_fixed(s, 0, 4, ym.year) || !detail::parse_fixed(s, 5, 2, ym.month))
    return std::nullopt;
  if (ym.month < 1 || ym.month > 12) return std::nullopt;
  return ym;
}

/// Parses "YYYY-MM-DDTHH:MM:SS" (a space separator is also accepted) into
/// seconds since the Unix epoch.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':')
    return std::nullopt;
  std::int64_t y;
  unsigned mo, d, h, mi, se;
  if (!detail::parse_fixed(s, 0, 4, y) || !detail::parse_fixed(s, 5, 2, mo) ||
      !detail::parse_fixed(s, 8, 2, d) || !detail::parse_fixed(s, 11, 2, h) ||
      !detail::parse_fixed(s, 14, 2, mi) || !detail::parse_fixed(s, 17, 2, se))
    return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h > 23 || mi > 59 || se > 59)
    return std::nullopt;
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
}

inline std::string format_timestamp(std::int64_t ts) {
  const std::int64_t days = floor_div(ts, 86400);
  const std::int64_t sod = ts - days * 86400;
  const CivilDate c = civil_from_days(days);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld",
                static_cast<long long>(c.year), c.month, c.day,
                static_cast<long long>(sod / 3600), static_cast<long long>(sod / 60 % 60),
                static_cast<long long>(sod % 60));
  return buf;
}

/// Local-calendar view of timestamps: a fixed UTC offset applied before
/// extracting the civil day, month and hour.
struct LocalClock {
  std::int64_t utc_offset_seconds = 0;

  std::int64_t day(std::int64_t ts) const { return floor_div(ts + utc_offset_seconds, 86400); }
  unsigned hour(std::int64_t ts) const {
    const std::int64_t local = ts + utc_offset_seconds;
    return static_cast<unsigned>((local - floor_div(local, 86400) * 86400) / 3600);
  }
  YearMonth month(std::int64_t ts) const {
    const CivilDate c = civil_from_days(day(ts));
    return {c.year, c.month};
  }
  /// Month offset from `start`; may be negative or beyond the window.
  std::int64_t month_index(std::int64_t ts, const YearMonth& start) const {
    return start.months_until(month(ts));
  }
};

}  // namespace migcdr
