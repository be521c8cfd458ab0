#pragma once
// Call-detail-record ingestion: record schema, demographics, tower registry,
// mirror-leg deduplication and geodesic distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "migcdr/util/civil_time.hpp"
#include "migcdr/util/support.hpp"
#include "migcdr/util/text.hpp"

namespace migcdr {

using UserId = std::uint32_t;
using TowerId = std::int32_t;
using ProvinceId = std::int32_t;
using CityId = std::int32_t;

inline constexpr TowerId kNoTower = -1;
inline constexpr std::int32_t kUnknown = -1;
inline constexpr int kWindowMonths = 24;

enum class EventKind : std::uint8_t { call = 0, sms = 1 };
enum class Direction : std::uint8_t { outgoing = 0, incoming = 1 };

/// One logged call or SMS leg. `origin` is the subscriber whose record this
/// is and `tower` is the origin subscriber's serving cell.
struct CdrRecord {
  UserId origin = 0;
  UserId peer = 0;
  EventKind kind = EventKind::call;
  Direction direction = Direction::outgoing;
  std::int64_t timestamp = 0;
  TowerId tower = kNoTower;

  UserId caller() const { return direction == Direction::outgoing ? origin : peer; }
  UserId callee() const { return direction == Direction::outgoing ? peer : origin; }

  friend bool operator==(const CdrRecord&, const CdrRecord&) = default;
};

inline bool record_less(const CdrRecord& a, const CdrRecord& b) {
  return std::tie(a.timestamp, a.origin, a.peer, a.kind, a.direction, a.tower) <
         std::tie(b.timestamp, b.origin, b.peer, b.kind, b.direction, b.tower);
}

enum class Gender : std::uint8_t { unknown = 0, female = 1, male = 2 };

struct UserProfile {
  std::optional<int> age;
  Gender gender = Gender::unknown;

  bool known() const { return age.has_value() && gender != Gender::unknown; }
  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

/// Administrative resolution of a tower; either field may be kUnknown.
struct Location {
  ProvinceId province = kUnknown;
  CityId city = kUnknown;
  friend bool operator==(const Location&, const Location&) = default;
};

/// Row of the tower registry file. Empty admin strings mean unknown.
struct TowerRecord {
  std::string tower;
  GeoPoint position;
  std::string province;
  std::string city;
};

inline constexpr double kEarthRadiusKm = 6371.0;

/// Haversine distance on a sphere of radius 6371.0 km.
inline double great_circle_km(const GeoPoint& p, const GeoPoint& q) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (q.lat - p.lat) * rad;
  const double dlon = (q.lon - p.lon) * rad;
  const double s1 = std::sin(dlat / 2);
  const double s2 = std::sin(dlon / 2);
  const double a = s1 * s1 + std::cos(p.lat * rad) * std::cos(q.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Offline replacement for reverse geocoding: tower id -> (province, city).
/// Province and city codes are interned in sorted order; city ids are unique
/// per (province, city) combination.
class TowerRegistry {
 public:
  struct Entry {
    GeoPoint position;
    Location location;
  };

  TowerRegistry() = default;

  /// Builds the registry; rows violating coordinate or admin invariants are
  /// rejected and counted in `rejected()`.
  static TowerRegistry build(std::span<const TowerRecord> rows) {
    TowerRegistry reg;
    std::vector<const TowerRecord*> valid;
    for (const auto& r : rows) {
      if (!valid_row(r)) {
        ++reg.rejected_;
        continue;
      }
      valid.push_back(&r);
    }
    std::vector<std::string> provs;
    std::vector<std::pair<std::string, std::string>> cities;
    for (const auto* r : valid) {
      if (!r->province.empty()) provs.push_back(r->province);
      if (!r->city.empty()) cities.emplace_back(r->province, r->city);
    }
    std::sort(provs.begin(), provs.end());
    provs.erase(std::unique(provs.begin(), provs.end()), provs.end());
    std::sort(cities.begin(), cities.end());
    cities.erase(std::unique(cities.begin(), cities.end()), cities.end());
    reg.provinces_ = provs;
    for (std::size_t i = 0; i < provs.size(); ++i)
      reg.province_index_[provs[i]] = static_cast<ProvinceId>(i);
    for (std::size_t i = 0; i < cities.size(); ++i) {
      reg.city_names_.push_back(cities[i].second);
      reg.city_province_.push_back(reg.province_index_.at(cities[i].first));
      reg.city_index_[city_key(cities[i].first, cities[i].second)] = static_cast<CityId>(i);
    }
    for (const auto* r : valid) {
      Entry e{r->position, {}};
      if (!r->province.empty()) e.location.province = reg.province_index_.at(r->province);
      if (!r->city.empty()) e.location.city = reg.city_index_.at(city_key(r->province, r->city));
      if (!reg.towers_.emplace(r->tower, e).second) ++reg.rejected_;
    }
    return reg;
  }

  static bool valid_row(const TowerRecord& r) {
    if (r.tower.empty()) return false;
    if (!(std::fabs(r.position.lat) <= 90.0) || !(std::fabs(r.position.lon) <= 180.0)) return false;
    if (!r.city.empty() && r.province.empty()) return false;
    return true;
  }

  const Entry* find(std::string_view tower) const {
    auto it = towers_.find(std::string(tower));
    return it == towers_.end() ? nullptr : &it->second;
  }

  /// Absent or unregistered towers resolve to (unknown, unknown).
  Location resolve(std::optional<std::string_view> tower) const {
    if (!tower) return {};
    const Entry* e = find(*tower);
    return e ? e->location : Location{};
  }

  std::optional<ProvinceId> province_id(std::string_view code) const {
    auto it = province_index_.find(std::string(code));
    if (it == province_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<CityId> city_id(std::string_view province, std::string_view city) const {
    auto it = city_index_.find(city_key(province, city));
    if (it == city_index_.end()) return std::nullopt;
    return it->second;
  }

  std::string province_code(ProvinceId p) const {
    return p == kUnknown ? std::string{} : provinces_.at(static_cast<std::size_t>(p));
  }
  std::string city_code(CityId c) const {
    return c == kUnknown ? std::string{} : city_names_.at(static_cast<std::size_t>(c));
  }
  ProvinceId city_province(CityId c) const {
    return c == kUnknown ? kUnknown : city_province_.at(static_cast<std::size_t>(c));
  }

  std::size_t province_count() const { return provinces_.size(); }
  std::size_t city_count() const { return city_names_.size(); }
  std::size_t size() const { return towers_.size(); }
  std::size_t rejected() const { return rejected_; }

  /// Registry rows in tower-id order.
  std::vector<TowerRecord> rows() const {
    std::vector<TowerRecord> out;
    out.reserve(towers_.size());
    for (const auto& [id, e] : towers_) {
      out.push_back({id, e.position, province_code(e.location.province),
                     city_code(e.location.city)});
    }
    std::sort(out.begin(), out.end(),
              [](const TowerRecord& a, const TowerRecord& b) { return a.tower < b.tower; });
    return out;
  }

 private:
  static std::string city_key(std::string_view province, std::string_view city) {
    std::string k(province);
    k.push_back('\x1f');
    k.append(city);
    return k;
  }

  std::vector<std::string> provinces_;
  std::vector<std::string> city_names_;
  std::vector<ProvinceId> city_province_;
  std::unordered_map<std::string, ProvinceId> province_index_;
  std::unordered_map<std::string, CityId> city_index_;
  std::unordered_map<std::string, Entry> towers_;
  std::size_t rejected_ = 0;
};

/// Column mapping and validation window for CDR files. Columns are matched by
/// header name.
struct CdrSchema {
  char delimiter = ';';
  std::string origin_column = "origin";
  std::string peer_column = "peer";
  std::string kind_column = "kind";
  std::string timestamp_column = "timestamp";
  std::string direction_column = "direction";
  std::string tower_column = "tower";
  YearMonth window_start{2008, 1};
  int months = kWindowMonths;
  LocalClock clock{};
};

/// Parsed CDR rows with a file-local user/tower intern table. Fragments are
/// merged by assemble_dataset.
struct CdrFragment {
  struct Row {
    std::uint32_t origin;
    std::uint32_t peer;
    EventKind kind;
    Direction direction;
    std::int64_t timestamp;
    std::int32_t tower;  // index into towers, or -1
  };

  std::vector<std::string> users;
  std::vector<std::string> towers;
  std::vector<Row> rows;
  std::size_t rows_read = 0;
  std::size_t malformed = 0;
};

namespace detail {

class Interner {
 public:
  std::uint32_t intern(std::string_view s) {
    auto it = index_.find(s);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(s);
    index_.emplace(names_.back(), id);
    return id;
  }
  std::vector<std::string> take() { return std::move(names_); }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t, Hash, std::equal_to<>> index_;
};

inline std::optional<EventKind> parse_kind(std::string_view s) {
  if (s == "call" || s == "CALL" || s == "voice") return EventKind::call;
  if (s == "sms" || s == "SMS") return EventKind::sms;
  return std::nullopt;
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "out" || s == "outgoing" || s == "OUT") return Direction::outgoing;
  if (s == "in" || s == "incoming" || s == "IN") return Direction::incoming;
  return std::nullopt;
}

}  // namespace detail

inline const char* kind_name(EventKind k) { return k == EventKind::call ? "call" : "sms"; }
inline const char* direction_name(Direction d) { return d == Direction::outgoing ? "out" : "in"; }

/// Parses delimiter-separated CDR text. Malformed rows (bad fields, self
/// calls, timestamps outside the window) are counted and skipped.
inline CdrFragment parse_cdr_stream(std::istream& in, const CdrSchema& schema,
                                    const std::string& source = "<stream>") {
  CdrFragment frag;
  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatchError(source + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line, schema.delimiter);
  auto column = [&](const std::string& name, bool required) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return static_cast<int>(i);
    if (required) throw SchemaMismatchError(source + ": header lacks column '" + name + "'");
    return -1;
  };
  const int c_origin = column(schema.origin_column, true);
  const int c_peer = column(schema.peer_column, true);
  const int c_kind = column(schema.kind_column, true);
  const int c_ts = column(schema.timestamp_column, true);
  const int c_dir = column(schema.direction_column, true);
  const int c_tower = column(schema.tower_column, false);
  const int needed = std::max({c_origin, c_peer, c_kind, c_ts, c_dir, c_tower});

  detail::Interner users, towers;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++frag.rows_read;
    const auto f = split_fields(line, schema.delimiter);
    if (static_cast<int>(f.size()) <= needed) {
      ++frag.malformed;
      continue;
    }
    const auto origin = trim(f[c_origin]);
    const auto peer = trim(f[c_peer]);
    const auto kind = detail::parse_kind(trim(f[c_kind]));
    const auto dir = detail::parse_direction(trim(f[c_dir]));
    const auto ts = parse_timestamp(trim(f[c_ts]));
    if (origin.empty() || peer.empty() || origin == peer || !kind || !dir || !ts) {
      ++frag.malformed;
      continue;
    }
    const auto month = schema.clock.month_index(*ts, schema.window_start);
    if (month < 0 || month >= schema.months) {
      ++frag.malformed;
      continue;
    }
    std::int32_t tower = -1;
    if (c_tower >= 0) {
      const auto t = trim(f[c_tower]);
      if (!t.empty()) tower = static_cast<std::int32_t>(towers.intern(t));
    }
    frag.rows.push_back({users.intern(origin), users.intern(peer), *kind, *dir, *ts, tower});
  }
  frag.users = users.take();
  frag.towers = towers.take();
  if (frag.rows_read > 0 && frag.malformed * 2 > frag.rows_read) {
    throw SchemaMismatchError(source + ": " + std::to_string(frag.malformed) + " of " +
                              std::to_string(frag.rows_read) + " rows malformed");
  }
  return frag;
}

inline CdrFragment parse_cdr_file(const std::string& path, const CdrSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read CDR file " + path);
  return parse_cdr_stream(in, schema, path);
}

inline TowerRegistry parse_tower_registry(const std::string& path) {
  std::vector<TowerRecord> rows;
  bool header = true;
  std::size_t malformed = 0;
  const bool ok = for_each_line(path, [&](std::string_view line) {
    if (header) {
      header = false;
      const auto h = split_fields(line, ',');
      if (h.size() < 5 || trim(h[0]) != "tower_id" || trim(h[1]) != "lat" ||
          trim(h[2]) != "lon" || trim(h[3]) != "province" || trim(h[4]) != "city")
        throw SchemaMismatchError(path + ": expected header tower_id,lat,lon,province,city");
      return;
    }
    if (line.empty()) return;
    const auto f = split_fields(line, ',');
    const auto lat = f.size() >= 5 ? parse_double(f[1]) : std::nullopt;
    const auto lon = f.size() >= 5 ? parse_double(f[2]) : std::nullopt;
    if (!lat || !lon) {
      ++malformed;
      return;
    }
    rows.push_back({std::string(trim(f[0])), {*lat, *lon}, std::string(trim(f[3])),
                    std::string(trim(f[4]))});
  });
  if (!ok) throw IoError("cannot read tower registry " + path);
  auto reg = TowerRegistry::build(rows);
  if (malformed + reg.rejected() > 0)
    log_warn(path + ": skipped " + std::to_string(malformed + reg.rejected()) + " tower rows");
  return reg;
}

/// Demographics rows `user_id,age,gender`; empty or out-of-range cells are
/// unknown.
inline std::vector<std::pair<std::string, UserProfile>> parse_demographics(const std::string& path) {
  std::vector<std::pair<std::string, UserProfile>> out;
  bool header = true;
  const bool ok = for_each_line(path, [&](std::string_view line) {
    if (header) {
      header = false;
      const auto h = split_fields(line, ',');
      if (h.size() < 3 || trim(h[0]) != "user_id" || trim(h[1]) != "age" || trim(h[2]) != "gender")
        throw SchemaMismatchError(path + ": expected header user_id,age,gender");
      return;
    }
    if (line.empty()) return;
    const auto f = split_fields(line, ',');
    if (f.size() < 3 || trim(f[0]).empty()) return;
    UserProfile p;
    if (auto age = parse_int(f[1]); age && *age > 0 && *age < 120) p.age = static_cast<int>(*age);
    const auto g = trim(f[2]);
    if (g == "F" || g == "f") p.gender = Gender::female;
    else if (g == "M" || g == "m") p.gender = Gender::male;
    out.emplace_back(std::string(trim(f[0])), p);
  });
  if (!ok) throw IoError("cannot read demographics " + path);
  return out;
}

struct IngestStats {
  std::size_t rows_read = 0;
  std::size_t malformed = 0;
  std::size_t mirror_legs_merged = 0;
  std::size_t events_without_tower = 0;
  std::size_t events_unregistered_tower = 0;
  std::size_t profiles_unmatched = 0;
};

/// Assembled, immutable dataset. User and tower ids index the sorted string
/// tables, so ids are stable for a given input regardless of file order.
struct Dataset {
  YearMonth window_start{2008, 1};
  int months = kWindowMonths;
  LocalClock clock{};
  std::vector<std::string> users;
  std::vector<UserProfile> profiles;
  std::vector<std::string> towers;
  std::vector<Location> tower_location;
  std::vector<std::optional<GeoPoint>> tower_point;
  std::vector<CdrRecord> records;
  TowerRegistry registry;
  IngestStats stats;

  std::size_t user_count() const { return users.size(); }

  Location resolve_location(TowerId t) const {
    return t == kNoTower ? Location{} : tower_location[static_cast<std::size_t>(t)];
  }

  /// 0-based month index of a record inside the observation window.
  int month_of(const CdrRecord& r) const {
    return static_cast<int>(clock.month_index(r.timestamp, window_start));
  }

  std::optional<UserId> find_user(std::string_view id) const {
    auto it = std::lower_bound(users.begin(), users.end(), id);
    if (it == users.end() || *it != id) return std::nullopt;
    return static_cast<UserId>(it - users.begin());
  }
};

/// Returns true when b is a mirror leg of a: same caller, callee and kind,
/// complementary directions, timestamps within tolerance.
inline bool is_mirror(const CdrRecord& a, const CdrRecord& b, std::int64_t tolerance_s) {
  return a.kind == b.kind && a.direction != b.direction && a.caller() == b.caller() &&
         a.callee() == b.callee() &&
         std::llabs(a.timestamp - b.timestamp) <= tolerance_s;
}

/// Drops every incoming leg that has an outgoing mirror within tolerance; the
/// outgoing leg (and its tower) represents the merged event. Idempotent,
/// order-preserving and never increases the record count.
inline std::vector<CdrRecord> deduplicate_events(std::span<const CdrRecord> records,
                                                 std::int64_t tolerance_s = 1,
                                                 std::size_t* merged = nullptr) {
  std::unordered_map<std::uint64_t, std::vector<std::int64_t>> outgoing;
  auto key = [](const CdrRecord& r) {
    return (static_cast<std::uint64_t>(r.caller()) << 33) |
           (static_cast<std::uint64_t>(r.callee()) << 1) | static_cast<std::uint64_t>(r.kind);
  };
  for (const auto& r : records)
    if (r.direction == Direction::outgoing) outgoing[key(r)].push_back(r.timestamp);
  for (auto& [k, v] : outgoing) std::sort(v.begin(), v.end());

  std::vector<CdrRecord> out;
  out.reserve(records.size());
  std::size_t dropped = 0;
  for (const auto& r : records) {
    if (r.direction == Direction::incoming) {
      auto it = outgoing.find(key(r));
      if (it != outgoing.end()) {
        const auto& ts = it->second;
        auto lo = std::lower_bound(ts.begin(), ts.end(), r.timestamp - tolerance_s);
        if (lo != ts.end() && *lo <= r.timestamp + tolerance_s) {
          ++dropped;
          continue;
        }
      }
    }
    out.push_back(r);
  }
  if (merged) *merged = dropped;
  return out;
}

/// Merges fragments with demographics and the tower registry into a sorted
/// dataset; optionally deduplicates mirror legs.
inline Dataset assemble_dataset(std::vector<CdrFragment> fragments,
                                std::span<const std::pair<std::string, UserProfile>> demographics,
                                TowerRegistry registry, const CdrSchema& schema,
                                bool dedup = true, std::int64_t dedup_tolerance_s = 1) {
  Dataset ds;
  ds.window_start = schema.window_start;
  ds.months = schema.months;
  ds.clock = schema.clock;

  std::vector<std::string> users, towers;
  for (const auto& f : fragments) {
    users.insert(users.end(), f.users.begin(), f.users.end());
    towers.insert(towers.end(), f.towers.begin(), f.towers.end());
    ds.stats.rows_read += f.rows_read;
    ds.stats.malformed += f.malformed;
  }
  for (const auto& row : registry.rows()) towers.push_back(row.tower);
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(towers.begin(), towers.end());
  towers.erase(std::unique(towers.begin(), towers.end()), towers.end());

  auto index_of = [](const std::vector<std::string>& table, const std::string& s) {
    return static_cast<std::uint32_t>(std::lower_bound(table.begin(), table.end(), s) - table.begin());
  };
  std::vector<CdrRecord> records;
  for (const auto& f : fragments) {
    std::vector<std::uint32_t> umap(f.users.size()), tmap(f.towers.size());
    for (std::size_t i = 0; i < f.users.size(); ++i) umap[i] = index_of(users, f.users[i]);
    for (std::size_t i = 0; i < f.towers.size(); ++i) tmap[i] = index_of(towers, f.towers[i]);
    for (const auto& r : f.rows) {
      records.push_back({umap[r.origin], umap[r.peer], r.kind, r.direction, r.timestamp,
                         r.tower < 0 ? kNoTower : static_cast<TowerId>(tmap[static_cast<std::size_t>(r.tower)])});
    }
  }
  fragments.clear();
  std::sort(records.begin(), records.end(), record_less);

  ds.tower_location.resize(towers.size());
  ds.tower_point.resize(towers.size());
  for (std::size_t i = 0; i < towers.size(); ++i) {
    if (const auto* e = registry.find(towers[i])) {
      ds.tower_location[i] = e->location;
      ds.tower_point[i] = e->position;
    }
  }

  if (dedup) {
    records = deduplicate_events(records, dedup_tolerance_s, &ds.stats.mirror_legs_merged);
  }
  for (const auto& r : records) {
    if (r.tower == kNoTower) ++ds.stats.events_without_tower;
    else if (!ds.tower_point[static_cast<std::size_t>(r.tower)]) ++ds.stats.events_unregistered_tower;
  }

  ds.profiles.assign(users.size(), UserProfile{});
  for (const auto& [id, prof] : demographics) {
    auto it = std::lower_bound(users.begin(), users.end(), id);
    if (it != users.end() && *it == id) ds.profiles[static_cast<std::size_t>(it - users.begin())] = prof;
    else ++ds.stats.profiles_unmatched;
  }
  ds.users = std::move(users);
  ds.towers = std::move(towers);
  ds.records = std::move(records);
  ds.registry = std::move(registry);
  return ds;
}

// ---------------------------------------------------------------------------
// Writers

inline void write_cdr_stream(std::ostream& out, const Dataset& ds, const CdrSchema& schema) {
  const char d = schema.delimiter;
  out << schema.origin_column << d << schema.peer_column << d << schema.kind_column << d
      << schema.timestamp_column << d << schema.direction_column << d << schema.tower_column << '\n';
  for (const auto& r : ds.records) {
    out << ds.users[r.origin] << d << ds.users[r.peer] << d << kind_name(r.kind) << d
        << format_timestamp(r.timestamp) << d << direction_name(r.direction) << d;
    if (r.tower != kNoTower) out << ds.towers[static_cast<std::size_t>(r.tower)];
    out << '\n';
  }
}

inline void write_tower_registry(const std::string& path, std::span<const TowerRecord> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "tower_id,lat,lon,province,city\n";
  for (const auto& r : rows) {
    out << r.tower << ',' << fmt_double(r.position.lat) << ',' << fmt_double(r.position.lon) << ','
        << r.province << ',' << r.city << '\n';
  }
}

inline void write_demographics(const std::string& path,
                               std::span<const std::pair<std::string, UserProfile>> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "user_id,age,gender\n";
  for (const auto& [id, p] : rows) {
    out << id << ',';
    if (p.age) out << *p.age;
    out << ',';
    if (p.gender == Gender::female) out << 'F';
    else if (p.gender == Gender::male) out << 'M';
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Binary dataset cache used between pipeline stages.

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  template <typename T>
  void pods(const std::vector<T>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

 private:
  std::ostream& out_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw IoError("truncated dataset cache");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated dataset cache");
    return s;
  }
  template <typename T>
  std::vector<T> pods() {
    const auto n = pod<std::uint64_t>();
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw IoError("truncated dataset cache");
    return v;
  }

 private:
  std::istream& in_;
};

struct PackedRecord {
  std::uint32_t origin, peer;
  std::int64_t timestamp;
  std::int32_t tower;
  std::uint8_t kind, direction, pad0 = 0, pad1 = 0;
};

inline constexpr std::uint64_t kCacheMagic = 0x314d474943444d31ULL;

}  // namespace detail

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  detail::BinWriter w(out);
  w.pod(detail::kCacheMagic);
  w.pod<std::int64_t>(ds.window_start.year);
  w.pod<std::uint32_t>(ds.window_start.month);
  w.pod<std::int32_t>(ds.months);
  w.pod<std::int64_t>(ds.clock.utc_offset_seconds);
  w.pod<std::uint64_t>(ds.users.size());
  for (const auto& u : ds.users) w.str(u);
  for (const auto& p : ds.profiles) {
    w.pod<std::int32_t>(p.age.value_or(-1));
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(p.gender));
  }
  const auto rows = ds.registry.rows();
  w.pod<std::uint64_t>(rows.size());
  for (const auto& r : rows) {
    w.str(r.tower);
    w.pod(r.position.lat);
    w.pod(r.position.lon);
    w.str(r.province);
    w.str(r.city);
  }
  w.pod<std::uint64_t>(ds.towers.size());
  for (const auto& t : ds.towers) w.str(t);
  std::vector<detail::PackedRecord> packed;
  packed.reserve(ds.records.size());
  for (const auto& r : ds.records)
    packed.push_back({r.origin, r.peer, r.timestamp, r.tower, static_cast<std::uint8_t>(r.kind),
                      static_cast<std::uint8_t>(r.direction)});
  w.pods(packed);
  const auto& s = ds.stats;
  for (auto v : {s.rows_read, s.malformed, s.mirror_legs_merged, s.events_without_tower,
                 s.events_unregistered_tower, s.profiles_unmatched})
    w.pod<std::uint64_t>(v);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  detail::BinReader r(in);
  if (r.pod<std::uint64_t>() != detail::kCacheMagic) throw IoError(path + ": not a dataset cache");
  Dataset ds;
  ds.window_start.year = r.pod<std::int64_t>();
  ds.window_start.month = r.pod<std::uint32_t>();
  ds.months = r.pod<std::int32_t>();
  ds.clock.utc_offset_seconds = r.pod<std::int64_t>();
  const auto nu = r.pod<std::uint64_t>();
  ds.users.reserve(nu);
  for (std::uint64_t i = 0; i < nu; ++i) ds.users.push_back(r.str());
  ds.profiles.resize(nu);
  for (auto& p : ds.profiles) {
    const auto age = r.pod<std::int32_t>();
    if (age >= 0) p.age = age;
    p.gender = static_cast<Gender>(r.pod<std::uint8_t>());
  }
  const auto nreg = r.pod<std::uint64_t>();
  std::vector<TowerRecord> rows(nreg);
  for (auto& t : rows) {
    t.tower = r.str();
    t.position.lat = r.pod<double>();
    t.position.lon = r.pod<double>();
    t.province = r.str();
    t.city = r.str();
  }
  ds.registry = TowerRegistry::build(rows);
  const auto nt = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nt; ++i) ds.towers.push_back(r.str());
  ds.tower_location.resize(nt);
  ds.tower_point.resize(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    if (const auto* e = ds.registry.find(ds.towers[i])) {
      ds.tower_location[i] = e->location;
      ds.tower_point[i] = e->position;
    }
  }
  const auto packed = r.pods<detail::PackedRecord>();
  ds.records.reserve(packed.size());
  for (const auto& p : packed)
    ds.records.push_back({p.origin, p.peer, static_cast<EventKind>(p.kind),
                          static_cast<Direction>(p.direction), p.timestamp, p.tower});
  auto& s = ds.stats;
  for (auto* v : {&s.rows_read, &s.malformed, &s.mirror_legs_merged, &s.events_without_tower,
                  &s.events_unregistered_tower, &s.profiles_unmatched})
    *v = r.pod<std::uint64_t>();
  return ds;
}

}  // namespace migcdr
