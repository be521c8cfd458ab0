#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "migcdr/cdr_core.hpp"
#include "migcdr/util/rng.hpp"

using namespace migcdr;

namespace {

TowerRegistry small_registry() {
  std::vector<TowerRecord> rows{{"t1", {40.0, -3.0}, "MAD", "m1"},
                                {"t2", {41.4, 2.1}, "BCN", "b1"},
                                {"t3", {10.0, 10.0}, "", ""},
                                {"bad", {95.0, 0.0}, "MAD", "m1"},
                                {"orphan", {1.0, 1.0}, "", "c9"}};
  return TowerRegistry::build(rows);
}

// Independent matcher: an incoming leg is a mirror when any outgoing leg
// of the same caller, callee and kind lies within the tolerance.
std::vector<CdrRecord> brute_force_dedup(const std::vector<CdrRecord>& recs, std::int64_t tol) {
  std::vector<CdrRecord> out;
  for (const auto& r : recs) {
    bool mirror = false;
    if (r.direction == Direction::incoming)
      for (const auto& o : recs)
        mirror = mirror || (o.direction == Direction::outgoing && o.caller() == r.caller() && o.callee() == r.callee() &&
                            o.kind == r.kind && std::llabs(o.timestamp - r.timestamp) <= tol);
    if (!mirror) out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(GreatCircle, OneDegreeOfEquatorialArc) {
  const double expected = kEarthRadiusKm * std::numbers::pi / 180.0;
  EXPECT_NEAR(great_circle_km({0, 0}, {0, 1}), 111.195, 1e-3);
  EXPECT_NEAR(great_circle_km({0, 0}, {0, 1}), expected, 1e-9);
}

TEST(GreatCircle, SymmetricAndZeroOnSelf) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const GeoPoint p{rng.uniform(-80, 80), rng.uniform(-180, 180)}, q{rng.uniform(-80, 80), rng.uniform(-180, 180)};
    EXPECT_NEAR(great_circle_km(p, q), great_circle_km(q, p), 1e-9);
    EXPECT_EQ(great_circle_km(p, p), 0.0);
    EXPECT_LE(great_circle_km(p, q), std::numbers::pi * kEarthRadiusKm + 1e-9);
  }
}

TEST(TowerRegistry, ResolvesKnownAndUnknownTowers) {
  const TowerRegistry reg = small_registry();
  EXPECT_EQ(reg.rejected(), 2u);
  const Location mad = reg.resolve("t1");
  EXPECT_EQ(reg.province_code(mad.province), "MAD");
  EXPECT_EQ(reg.city_code(mad.city), "m1");
  EXPECT_EQ(reg.resolve(std::nullopt), Location{});
  EXPECT_EQ(reg.resolve("nope"), Location{});
  EXPECT_EQ(reg.resolve("t3"), Location{});
}

TEST(CivilTime, RoundTripsDays) {
  for (std::int64_t z = -800000; z < 800000; z += 997) {
    const CivilDate c = civil_from_days(z);
    EXPECT_EQ(days_from_civil(c.year, c.month, c.day), z);
  }
  EXPECT_EQ(days_from_civil(1970, 1, 1), 0);
  EXPECT_EQ(iso_weekday(0), 4u);  // Thursday
}

TEST(CivilTime, TimestampParseFormat) {
  const auto ts = parse_timestamp("2008-02-29T23:59:58");
  ASSERT_TRUE(ts);
  EXPECT_EQ(format_timestamp(*ts), "2008-02-29T23:59:58");
  EXPECT_FALSE(parse_timestamp("2009-02-29T00:00:00"));
  EXPECT_FALSE(parse_timestamp("2008-13-01T00:00:00"));
  EXPECT_TRUE(parse_timestamp("2008-01-01 00:00:00"));
}

TEST(CdrParse, MissingColumnIsSchemaMismatch) {
  std::istringstream in("origin;peer;kind;timestamp\nA;B;call;2008-01-01T00:00:00\n");
  EXPECT_THROW(parse_cdr_stream(in, CdrSchema{}), SchemaMismatchError);
}

TEST(CdrParse, CountsMalformedRows) {
  std::istringstream in(
      "origin;peer;kind;timestamp;direction;tower\n"
      "A;B;call;2008-01-03T10:00:00;out;t1\n"
      "A;A;call;2008-01-03T10:00:00;out;t1\n"
      "A;B;fax;2008-01-03T10:00:00;out;t1\n"
      "A;B;sms;2007-12-31T23:00:00;out;t1\n"
      "B;A;sms;2008-03-01T12:00:00;in;\n"
      "A;C;call;2008-02-01T08:00:00;out;t2\n");
  const CdrFragment f = parse_cdr_stream(in, CdrSchema{});
  EXPECT_EQ(f.rows_read, 6u);
  EXPECT_EQ(f.malformed, 3u);
  EXPECT_EQ(f.rows.size(), 3u);
  EXPECT_EQ(f.rows[1].tower, -1);
}

TEST(CdrParse, MostlyMalformedFileRejected) {
  std::istringstream in("origin;peer;kind;timestamp;direction\nA;A;call;x;out\nA;B;call;2008-01-01T00:00:00;out\nA;;call;x;out\n");
  EXPECT_THROW(parse_cdr_stream(in, CdrSchema{}), SchemaMismatchError);
}

TEST(Dedup, MatchesBruteForceOnRandomMirrors) {
  Rng rng(17);
  std::vector<CdrRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    CdrRecord out;
    out.origin = static_cast<UserId>(rng.below(20));
    out.peer = static_cast<UserId>((out.origin + 1 + rng.below(19)) % 20);
    out.kind = rng.bernoulli(0.3) ? EventKind::sms : EventKind::call;
    out.timestamp = static_cast<std::int64_t>(rng.below(100000));
    recs.push_back(out);
    if (rng.bernoulli(0.6)) {
      CdrRecord in = out;
      std::swap(in.origin, in.peer);
      in.direction = Direction::incoming;
      in.timestamp += static_cast<std::int64_t>(rng.below(4)) - 1;
      recs.push_back(in);
    }
  }
  std::sort(recs.begin(), recs.end(), record_less);
  std::size_t merged = 0;
  const auto got = deduplicate_events(recs, 1, &merged);
  const auto want = brute_force_dedup(recs, 1);
  EXPECT_EQ(got, want);
  EXPECT_EQ(merged, recs.size() - want.size());
}

TEST(Dedup, ThousandExactMirrorsCollapse) {
  std::vector<CdrRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    CdrRecord out{static_cast<UserId>(i % 7), static_cast<UserId>(7 + i % 5), EventKind::call, Direction::outgoing,
                  1000 * i, kNoTower};
    CdrRecord in{out.peer, out.origin, EventKind::call, Direction::incoming, 1000 * i, kNoTower};
    recs.push_back(out);
    recs.push_back(in);
  }
  std::sort(recs.begin(), recs.end(), record_less);
  const auto got = deduplicate_events(recs, 1);
  EXPECT_EQ(got.size(), 1000u);
  EXPECT_EQ(got, brute_force_dedup(recs, 1));
}

TEST(Dataset, AssembleAndBinaryRoundTrip) {
  std::istringstream in(
      "origin;peer;kind;timestamp;direction;tower\n"
      "u2;u1;call;2008-01-03T10:00:00;out;t1\n"
      "u1;u2;call;2008-01-03T10:00:00;in;t2\n"
      "u3;u1;sms;2008-05-03T10:00:00;out;t9\n");
  std::vector<CdrFragment> frags{parse_cdr_stream(in, CdrSchema{})};
  std::vector<std::pair<std::string, UserProfile>> demo{{"u1", {30, Gender::female}}, {"zz", {40, Gender::male}}};
  const Dataset ds = assemble_dataset(std::move(frags), demo, small_registry(), CdrSchema{});
  EXPECT_EQ(ds.users, (std::vector<std::string>{"u1", "u2", "u3"}));
  EXPECT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(ds.stats.mirror_legs_merged, 1u);
  EXPECT_EQ(ds.stats.profiles_unmatched, 1u);
  EXPECT_TRUE(ds.profiles[0].known());
  EXPECT_EQ(ds.month_of(ds.records.back()), 4);

  const auto path = (std::filesystem::temp_directory_path() / "migcdr_ds_roundtrip.bin").string();
  save_dataset(path, ds);
  const Dataset back = load_dataset(path);
  EXPECT_EQ(back.users, ds.users);
  EXPECT_EQ(back.records, ds.records);
  EXPECT_EQ(back.profiles, ds.profiles);
  EXPECT_EQ(back.tower_location, ds.tower_location);
  std::filesystem::remove(path);
}

TEST(Rng, DeriveSeedIsOrderFreeAcrossCalls) {
  EXPECT_EQ(derive_seed(1, "a", 2), derive_seed(1, "a", 2));
  EXPECT_NE(derive_seed(1, "a", 2), derive_seed(1, 2, "a"));
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}
