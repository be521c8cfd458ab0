#pragma once
// Seeded synthetic CDR generator with ground truth (movers, planted strong
// ties with rise/decay regimes), a series-level generator for clustering
// checks, and the oracle scorer for pipeline outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "migcdr/cdr_core.hpp"
#include "migcdr/pair_series.hpp"
#include "migcdr/util/rng.hpp"
#include "migcdr/util/support.hpp"

namespace migcdr {

struct SynthConfig {
  std::size_t n_users = 5000;
  double mover_fraction = 0.013;
  int months = kWindowMonths;
  YearMonth window_start{2008, 1};
  int provinces = 12;
  int cities_per_province = 4;
  int towers_per_city = 6;
  double province_spacing_deg = 2.0;
  double city_spread_deg = 0.6;
  double tower_spread_deg = 0.03;
  int strong_ties = 3;
  double strong_rate = 12.0;   // calls per month per strong tie
  double rate_sigma = 0.4;     // lognormal heterogeneity of tie rates
  int weak_ties = 8;
  double weak_rate = 0.3;
  double sms_rate = 4.0;       // outgoing SMS per user-month
  double delta = 0.5;          // post-move multiplier 1 +/- delta
  double p_decay = 0.57;
  double rate_noise_sigma = 0.1;
  double life_event_prob = 0.5;  // strong ties between non-movers
  double life_event_delta = 0.5;
  int life_events_per_tie = 1;   // independent steps per changing tie
  int move_month_lo = 5;
  int move_month_hi = 20;
  double travel_prob = 0.0;
  double missing_tower_prob = 0.0;
  double silent_month_prob = 0.0;
  double unknown_demographics_prob = 0.02;
  bool mirror_legs = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_users < 2) throw ParameterError("synth: n_users must be >= 2");
    if (!(mover_fraction >= 0.0 && mover_fraction < 1.0)) throw ParameterError("synth: mover_fraction must be in [0,1)");
    if (!(strong_rate > 0.0)) throw ParameterError("synth: strong_rate must be > 0");
    if (provinces < 2) throw ParameterError("synth: need at least 2 provinces");
    if (cities_per_province < 1 || towers_per_city < 1) throw ParameterError("synth: every city needs towers");
    if (months < 2 || months > 31) throw ParameterError("synth: months must be in [2,31]");
    if (move_month_lo < 1 || move_month_hi >= months || move_month_lo > move_month_hi)
      throw ParameterError("synth: invalid moving-month range");
    if (life_events_per_tie < 1) throw ParameterError("synth: life_events_per_tie must be >= 1");
    if (delta < 0.0 || delta >= 1.0 || life_event_delta < 0.0 || life_event_delta >= 1.0)
      throw ParameterError("synth: delta must be in [0,1)");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_users", c.n_users},
          {"mover_fraction", c.mover_fraction},
          {"months", c.months},
          {"window_start", c.window_start.str()},
          {"provinces", c.provinces},
          {"cities_per_province", c.cities_per_province},
          {"towers_per_city", c.towers_per_city},
          {"province_spacing_deg", c.province_spacing_deg},
          {"city_spread_deg", c.city_spread_deg},
          {"tower_spread_deg", c.tower_spread_deg},
          {"strong_ties", c.strong_ties},
          {"strong_rate", c.strong_rate},
          {"rate_sigma", c.rate_sigma},
          {"weak_ties", c.weak_ties},
          {"weak_rate", c.weak_rate},
          {"sms_rate", c.sms_rate},
          {"delta", c.delta},
          {"p_decay", c.p_decay},
          {"rate_noise_sigma", c.rate_noise_sigma},
          {"life_event_prob", c.life_event_prob},
          {"life_event_delta", c.life_event_delta},
          {"life_events_per_tie", c.life_events_per_tie},
          {"move_month_lo", c.move_month_lo},
          {"move_month_hi", c.move_month_hi},
          {"travel_prob", c.travel_prob},
          {"missing_tower_prob", c.missing_tower_prob},
          {"silent_month_prob", c.silent_month_prob},
          {"unknown_demographics_prob", c.unknown_demographics_prob},
          {"mirror_legs", c.mirror_legs},
          {"seed", c.seed}};
}

/// Reads fields present in `j` over `c`; unknown keys are rejected.
inline void update_from_json(SynthConfig& c, const nlohmann::json& j) {
  const nlohmann::json known = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ParameterError("synth: unknown key '" + it.key() + "'");
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  get("n_users", c.n_users);
  get("mover_fraction", c.mover_fraction);
  get("months", c.months);
  if (j.contains("window_start")) {
    auto ym = parse_year_month(j.at("window_start").get<std::string>());
    if (!ym) throw ParameterError("synth: window_start must be YYYY-MM");
    c.window_start = *ym;
  }
  get("provinces", c.provinces);
  get("cities_per_province", c.cities_per_province);
  get("towers_per_city", c.towers_per_city);
  get("province_spacing_deg", c.province_spacing_deg);
  get("city_spread_deg", c.city_spread_deg);
  get("tower_spread_deg", c.tower_spread_deg);
  get("strong_ties", c.strong_ties);
  get("strong_rate", c.strong_rate);
  get("rate_sigma", c.rate_sigma);
  get("weak_ties", c.weak_ties);
  get("weak_rate", c.weak_rate);
  get("sms_rate", c.sms_rate);
  get("delta", c.delta);
  get("p_decay", c.p_decay);
  get("rate_noise_sigma", c.rate_noise_sigma);
  get("life_event_prob", c.life_event_prob);
  get("life_event_delta", c.life_event_delta);
  get("life_events_per_tie", c.life_events_per_tie);
  get("move_month_lo", c.move_month_lo);
  get("move_month_hi", c.move_month_hi);
  get("travel_prob", c.travel_prob);
  get("missing_tower_prob", c.missing_tower_prob);
  get("silent_month_prob", c.silent_month_prob);
  get("unknown_demographics_prob", c.unknown_demographics_prob);
  get("mirror_legs", c.mirror_legs);
  get("seed", c.seed);
}

enum class TieRegime : std::uint8_t { stationary, move_rise, move_decay, life_rise, life_decay };

inline const char* regime_name(TieRegime r) {
  switch (r) {
    case TieRegime::stationary: return "stationary";
    case TieRegime::move_rise: return "move_rise";
    case TieRegime::move_decay: return "move_decay";
    case TieRegime::life_rise: return "life_rise";
    case TieRegime::life_decay: return "life_decay";
  }
  return "?";
}

struct TruthUser {
  std::string id;
  bool mover = false;
  std::string from_province, to_province;
  std::string from_city, to_city;
  int m = 0;  // 1-based moving month for movers
};

struct PlantedPair {
  std::string ego, alter;
  int m = 0;
  Trend regime = Trend::rise;
  double pre_rate = 0.0;   // expected calls per month before the move
  double post_rate = 0.0;  // and after
};

struct GroundTruth {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<TruthUser> users;
  std::vector<PlantedPair> planted;
  std::size_t life_events = 0;
  std::map<std::string, std::string> file_hashes;

  const TruthUser* find(std::string_view id) const {
    auto it = std::lower_bound(users.begin(), users.end(), id,
                               [](const TruthUser& u, std::string_view v) { return u.id < v; });
    return it != users.end() && it->id == id ? &*it : nullptr;
  }
};

inline nlohmann::json to_json(const GroundTruth& g) {
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : g.users) {
    if (u.mover)
      users.push_back({{"id", u.id}, {"status", "mover"}, {"from", u.from_province}, {"to", u.to_province},
                       {"from_city", u.from_city}, {"to_city", u.to_city}, {"m", u.m}});
    else
      users.push_back({{"id", u.id}, {"status", "non_mover"}, {"from", u.from_province}, {"from_city", u.from_city}});
  }
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& p : g.planted)
    planted.push_back({{"ego", p.ego}, {"alter", p.alter}, {"m", p.m}, {"regime", trend_name(p.regime)},
                       {"pre_rate", p.pre_rate}, {"post_rate", p.post_rate}});
  return {{"run_id", g.run_id}, {"seed", g.seed}, {"users", users}, {"planted_pairs", planted},
          {"life_events", g.life_events}, {"file_hashes", g.file_hashes}};
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth g;
  g.run_id = j.at("run_id").get<std::string>();
  g.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& u : j.at("users")) {
    TruthUser t;
    t.id = u.at("id").get<std::string>();
    t.mover = u.at("status").get<std::string>() == "mover";
    t.from_province = u.at("from").get<std::string>();
    t.from_city = u.at("from_city").get<std::string>();
    if (t.mover) {
      t.to_province = u.at("to").get<std::string>();
      t.to_city = u.at("to_city").get<std::string>();
      t.m = u.at("m").get<int>();
    }
    g.users.push_back(std::move(t));
  }
  for (const auto& p : j.at("planted_pairs"))
    g.planted.push_back({p.at("ego").get<std::string>(), p.at("alter").get<std::string>(), p.at("m").get<int>(),
                         p.at("regime").get<std::string>() == "decay" ? Trend::decay : Trend::rise,
                         p.at("pre_rate").get<double>(), p.at("post_rate").get<double>()});
  g.life_events = j.at("life_events").get<std::size_t>();
  g.file_hashes = j.at("file_hashes").get<std::map<std::string, std::string>>();
  return g;
}

inline GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return ground_truth_from_json(nlohmann::json::parse(in));
}

struct SynthOutput {
  std::vector<std::string> users;      // sorted ids
  std::vector<UserProfile> profiles;
  std::vector<TowerRecord> towers;     // sorted by tower id
  std::vector<CdrRecord> records;      // user / tower indices, sorted
  GroundTruth truth;
};

namespace detail {

struct SynthTie {
  UserId a = 0, b = 0;
  bool strong = false;
  double rate = 0.0;
  double p_a = 0.5;          // probability that a places a given call
  int change_month = -1;     // 0-based first month under the new multiplier
  double multiplier = 1.0;
  std::vector<std::pair<int, double>> later_steps;  // further life events
  TieRegime regime = TieRegime::stationary;
};

inline std::string pad_id(const char* prefix, std::size_t v, int width) {
  std::string digits = std::to_string(v);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

inline std::int64_t month_start_epoch(const YearMonth& start, int k) {
  const YearMonth ym = start.plus(k);
  return days_from_civil(ym.year, ym.month, 1) * 86400;
}

inline int draw_age(Rng& rng) {
  // coarse population pyramid over 5-year bands from 15 to 79
  static const double w[] = {6, 9, 10, 10, 10, 9, 9, 8, 8, 7, 6, 5, 3};
  const int band = static_cast<int>(rng.categorical(std::span<const double>(w, std::size(w))));
  return 15 + 5 * band + static_cast<int>(rng.below(5));
}

}  // namespace detail

/// Builds the synthetic world and its CDR stream.
inline SynthOutput generate(const SynthConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  SynthOutput out;
  const int P = cfg.provinces, CPP = cfg.cities_per_province, TPC = cfg.towers_per_city;
  const int n_cities = P * CPP;

  // geography: province centres on a grid, cities around them, towers around cities
  Rng geo(derive_seed(cfg.seed, "geo"));
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(P))));
  std::vector<std::string> province_code(static_cast<std::size_t>(P));
  std::vector<std::string> city_code(static_cast<std::size_t>(n_cities));
  std::vector<std::vector<TowerId>> city_towers(static_cast<std::size_t>(n_cities));
  for (int p = 0; p < P; ++p) {
    province_code[static_cast<std::size_t>(p)] = detail::pad_id("P", static_cast<std::size_t>(p + 1), 2);
    const GeoPoint pc{38.0 + cfg.province_spacing_deg * (p / cols), 20.0 + cfg.province_spacing_deg * (p % cols)};
    for (int c = 0; c < CPP; ++c) {
      const int city = p * CPP + c;
      city_code[static_cast<std::size_t>(city)] = province_code[static_cast<std::size_t>(p)] + "C" + std::to_string(c + 1);
      const GeoPoint cc{pc.lat + geo.uniform(-cfg.city_spread_deg, cfg.city_spread_deg),
                        pc.lon + geo.uniform(-cfg.city_spread_deg, cfg.city_spread_deg)};
      for (int t = 0; t < TPC; ++t) {
        TowerRecord tr;
        tr.tower = detail::pad_id("T", out.towers.size() + 1, 5);
        tr.position = {cc.lat + geo.uniform(-cfg.tower_spread_deg, cfg.tower_spread_deg),
                       cc.lon + geo.uniform(-cfg.tower_spread_deg, cfg.tower_spread_deg)};
        tr.province = province_code[static_cast<std::size_t>(p)];
        tr.city = city_code[static_cast<std::size_t>(city)];
        city_towers[static_cast<std::size_t>(city)].push_back(static_cast<TowerId>(out.towers.size()));
        out.towers.push_back(std::move(tr));
      }
    }
  }

  // users, homes, moves, demographics
  const std::size_t n = cfg.n_users;
  Rng pop(derive_seed(cfg.seed, "population"));
  std::vector<int> from_city(n), to_city(n, -1), move_m(n, 0);
  out.users.resize(n);
  out.profiles.resize(n);
  out.truth.users.resize(n);
  const auto n_movers = static_cast<std::size_t>(std::llround(cfg.mover_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  pop.shuffle(order.begin(), order.end());
  std::vector<bool> is_mover(n, false);
  for (std::size_t i = 0; i < n_movers; ++i) is_mover[order[i]] = true;
  for (std::size_t u = 0; u < n; ++u) {
    out.users[u] = detail::pad_id("u", u + 1, 6);
    from_city[u] = static_cast<int>(pop.below(static_cast<std::uint64_t>(n_cities)));
    auto& tu = out.truth.users[u];
    tu.id = out.users[u];
    tu.from_city = city_code[static_cast<std::size_t>(from_city[u])];
    tu.from_province = province_code[static_cast<std::size_t>(from_city[u] / CPP)];
    if (is_mover[u]) {
      const int fp = from_city[u] / CPP;
      int tp = static_cast<int>(pop.below(static_cast<std::uint64_t>(P - 1)));
      if (tp >= fp) ++tp;
      to_city[u] = tp * CPP + static_cast<int>(pop.below(static_cast<std::uint64_t>(CPP)));
      move_m[u] = cfg.move_month_lo + static_cast<int>(pop.below(static_cast<std::uint64_t>(cfg.move_month_hi - cfg.move_month_lo + 1)));
      tu.mover = true;
      tu.m = move_m[u];
      tu.to_city = city_code[static_cast<std::size_t>(to_city[u])];
      tu.to_province = province_code[static_cast<std::size_t>(tp)];
    }
    if (!pop.bernoulli(cfg.unknown_demographics_prob)) {
      out.profiles[u].age = detail::draw_age(pop);
      out.profiles[u].gender = pop.bernoulli(0.5) ? Gender::male : Gender::female;
    }
  }

  // ties: configuration-model stub matching, strong first then weak
  std::vector<detail::SynthTie> ties;
  std::unordered_set<std::uint64_t> edges;
  auto add_ties = [&](int stubs_per_user, bool strong, const char* tag) {
    Rng rng(derive_seed(cfg.seed, "ties", tag));
    std::vector<UserId> stubs;
    for (std::size_t u = 0; u < n; ++u)
      for (int s = 0; s < stubs_per_user; ++s) stubs.push_back(static_cast<UserId>(u));
    rng.shuffle(stubs.begin(), stubs.end());
    for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
      UserId a = stubs[i], b = stubs[i + 1];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
      if (!edges.insert(key).second) continue;
      detail::SynthTie t;
      t.a = a;
      t.b = b;
      t.strong = strong;
      const double base = strong ? cfg.strong_rate : cfg.weak_rate;
      t.rate = base * std::exp(cfg.rate_sigma * rng.normal() - cfg.rate_sigma * cfg.rate_sigma / 2.0);
      t.p_a = rng.uniform(0.3, 0.7);
      ties.push_back(t);
    }
  };
  add_ties(cfg.strong_ties, true, "strong");
  add_ties(cfg.weak_ties, false, "weak");

  // regimes: move shifts on strong ties with a mover, life events otherwise
  Rng reg(derive_seed(cfg.seed, "regimes"));
  for (auto& t : ties) {
    if (!t.strong) continue;
    const bool ma = is_mover[t.a], mb = is_mover[t.b];
    if (ma || mb) {
      const UserId mover = ma ? t.a : t.b;
      const bool decay = reg.bernoulli(cfg.p_decay);
      t.change_month = move_m[mover];
      t.multiplier = decay ? 1.0 - cfg.delta : 1.0 + cfg.delta;
      t.regime = decay ? TieRegime::move_decay : TieRegime::move_rise;
      const UserId other = mover == t.a ? t.b : t.a;
      if (!is_mover[other])
        out.truth.planted.push_back({out.users[mover], out.users[other], move_m[mover],
                                     decay ? Trend::decay : Trend::rise, t.rate, t.rate * t.multiplier});
    } else if (reg.bernoulli(cfg.life_event_prob)) {
      const bool decay = reg.bernoulli(0.5);
      t.change_month = 1 + static_cast<int>(reg.below(static_cast<std::uint64_t>(cfg.months - 1)));
      t.multiplier = decay ? 1.0 - cfg.life_event_delta : 1.0 + cfg.life_event_delta;
      t.regime = decay ? TieRegime::life_decay : TieRegime::life_rise;
      ++out.truth.life_events;
      for (int e = 1; e < cfg.life_events_per_tie; ++e) {
        const bool d = reg.bernoulli(0.5);
        const int month = 1 + static_cast<int>(reg.below(static_cast<std::uint64_t>(cfg.months - 1)));
        t.later_steps.emplace_back(month, d ? 1.0 - cfg.life_event_delta : 1.0 + cfg.life_event_delta);
        ++out.truth.life_events;
      }
    }
  }
  std::sort(out.truth.planted.begin(), out.truth.planted.end(),
            [](const PlantedPair& x, const PlantedPair& y) { return std::tie(x.ego, x.alter) < std::tie(y.ego, y.alter); });

  // per user adjacency for SMS peers, silent months
  std::vector<std::vector<UserId>> neighbours(n);
  for (const auto& t : ties) {
    neighbours[t.a].push_back(t.b);
    neighbours[t.b].push_back(t.a);
  }
  for (auto& v : neighbours) std::sort(v.begin(), v.end());
  std::vector<std::uint32_t> silent(n, 0);
  if (cfg.silent_month_prob > 0.0) {
    Rng rng(derive_seed(cfg.seed, "silent"));
    for (std::size_t u = 0; u < n; ++u)
      for (int k = 0; k < cfg.months; ++k)
        if (rng.bernoulli(cfg.silent_month_prob)) silent[u] |= 1u << k;
  }

  auto tower_of = [&](UserId u, int k, Rng& rng) -> TowerId {
    if (cfg.missing_tower_prob > 0.0 && rng.bernoulli(cfg.missing_tower_prob)) return kNoTower;
    int city = (is_mover[u] && k >= move_m[u]) ? to_city[u] : from_city[u];
    if (cfg.travel_prob > 0.0 && rng.bernoulli(cfg.travel_prob)) {
      const int home_p = city / CPP;
      int p = static_cast<int>(rng.below(static_cast<std::uint64_t>(P - 1)));
      if (p >= home_p) ++p;
      city = p * CPP + static_cast<int>(rng.below(static_cast<std::uint64_t>(CPP)));
    }
    const auto& tw = city_towers[static_cast<std::size_t>(city)];
    return tw[rng.below(tw.size())];
  };
  std::vector<std::int64_t> month_start(static_cast<std::size_t>(cfg.months + 1));
  for (int k = 0; k <= cfg.months; ++k) month_start[static_cast<std::size_t>(k)] = detail::month_start_epoch(cfg.window_start, k);

  auto emit = [&](std::vector<CdrRecord>& sink, UserId caller, UserId callee, EventKind kind, std::int64_t ts, int k,
                  Rng& rng) {
    if (((silent[caller] | silent[callee]) >> k) & 1u) return;
    sink.push_back({caller, callee, kind, Direction::outgoing, ts, tower_of(caller, k, rng)});
    if (cfg.mirror_legs) sink.push_back({callee, caller, kind, Direction::incoming, ts, tower_of(callee, k, rng)});
  };

  std::vector<std::vector<CdrRecord>> tie_records(ties.size());
  parallel_for(ties.size(), threads, [&](std::size_t i) {
    const auto& t = ties[i];
    Rng rng(derive_seed(cfg.seed, "tie-events", static_cast<std::uint64_t>(i)));
    for (int k = 0; k < cfg.months; ++k) {
      double rate = t.rate * (t.change_month >= 0 && k >= t.change_month ? t.multiplier : 1.0);
      for (const auto& [month, f] : t.later_steps)
        if (k >= month) rate *= f;
      if (cfg.rate_noise_sigma > 0.0)
        rate *= std::exp(cfg.rate_noise_sigma * rng.normal() - cfg.rate_noise_sigma * cfg.rate_noise_sigma / 2.0);
      const auto calls = rng.poisson(rate);
      const auto span = static_cast<std::uint64_t>(month_start[static_cast<std::size_t>(k + 1)] - month_start[static_cast<std::size_t>(k)]);
      for (std::uint64_t c = 0; c < calls; ++c) {
        const std::int64_t ts = month_start[static_cast<std::size_t>(k)] + static_cast<std::int64_t>(rng.below(span));
        const bool a_calls = rng.bernoulli(t.p_a);
        emit(tie_records[i], a_calls ? t.a : t.b, a_calls ? t.b : t.a, EventKind::call, ts, k, rng);
      }
    }
  });
  std::vector<std::vector<CdrRecord>> sms_records(n);
  parallel_for(n, threads, [&](std::size_t u) {
    Rng rng(derive_seed(cfg.seed, "sms", static_cast<std::uint64_t>(u)));
    for (int k = 0; k < cfg.months; ++k) {
      const auto count = rng.poisson(cfg.sms_rate);
      const auto span = static_cast<std::uint64_t>(month_start[static_cast<std::size_t>(k + 1)] - month_start[static_cast<std::size_t>(k)]);
      for (std::uint64_t c = 0; c < count; ++c) {
        UserId peer;
        if (!neighbours[u].empty()) {
          peer = neighbours[u][rng.below(neighbours[u].size())];
        } else {
          peer = static_cast<UserId>(rng.below(n - 1));
          if (peer >= u) ++peer;
        }
        const std::int64_t ts = month_start[static_cast<std::size_t>(k)] + static_cast<std::int64_t>(rng.below(span));
        emit(sms_records[u], static_cast<UserId>(u), peer, EventKind::sms, ts, k, rng);
      }
    }
  });
  std::size_t total = 0;
  for (const auto& v : tie_records) total += v.size();
  for (const auto& v : sms_records) total += v.size();
  out.records.reserve(total);
  for (auto& v : tie_records) {
    out.records.insert(out.records.end(), v.begin(), v.end());
    std::vector<CdrRecord>().swap(v);
  }
  for (auto& v : sms_records) {
    out.records.insert(out.records.end(), v.begin(), v.end());
    std::vector<CdrRecord>().swap(v);
  }
  std::sort(out.records.begin(), out.records.end(), record_less);

  out.truth.seed = cfg.seed;
  out.truth.run_id = hex64(fnv1a64(to_json(cfg).dump()));
  return out;
}

/// Converts generator output into a parsed fragment for assemble_dataset.
inline CdrFragment to_fragment(const SynthOutput& s) {
  CdrFragment f;
  f.users = s.users;
  for (const auto& t : s.towers) f.towers.push_back(t.tower);
  f.rows.reserve(s.records.size());
  for (const auto& r : s.records) f.rows.push_back({r.origin, r.peer, r.kind, r.direction, r.timestamp, r.tower});
  f.rows_read = s.records.size();
  return f;
}

inline std::vector<std::pair<std::string, UserProfile>> demographics_rows(const SynthOutput& s) {
  std::vector<std::pair<std::string, UserProfile>> rows;
  for (std::size_t u = 0; u < s.users.size(); ++u) rows.emplace_back(s.users[u], s.profiles[u]);
  return rows;
}

/// In-memory route to a Dataset (same result as writing and parsing files).
inline Dataset synth_dataset(const SynthOutput& s, const SynthConfig& cfg, bool dedup = true) {
  CdrSchema schema;
  schema.window_start = cfg.window_start;
  schema.months = cfg.months;
  std::vector<CdrFragment> frags;
  frags.push_back(to_fragment(s));
  const auto demo = demographics_rows(s);
  return assemble_dataset(std::move(frags), demo, TowerRegistry::build(s.towers), schema, dedup);
}

struct SynthFiles {
  std::string cdr = "cdr.csv";
  std::string towers = "towers.csv";
  std::string demographics = "demographics.csv";
  std::string ground_truth = "ground_truth.json";
};

/// Writes the CDR stream, tower registry, demographics and ground truth
/// (with content hashes of the other three files) into `dir`.
inline GroundTruth write_synth(const SynthOutput& s, const std::string& dir, const SynthFiles& names = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string cdr_path = (fs::path(dir) / names.cdr).string();
  {
    std::ofstream out(cdr_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + cdr_path);
    const CdrSchema schema;
    const char d = schema.delimiter;
    out << schema.origin_column << d << schema.peer_column << d << schema.kind_column << d << schema.timestamp_column
        << d << schema.direction_column << d << schema.tower_column << '\n';
    std::string line;
    for (const auto& r : s.records) {
      line.clear();
      line += s.users[r.origin];
      line += d;
      line += s.users[r.peer];
      line += d;
      line += kind_name(r.kind);
      line += d;
      line += format_timestamp(r.timestamp);
      line += d;
      line += direction_name(r.direction);
      line += d;
      if (r.tower != kNoTower) line += s.towers[static_cast<std::size_t>(r.tower)].tower;
      line += '\n';
      out << line;
    }
  }
  const std::string tower_path = (fs::path(dir) / names.towers).string();
  write_tower_registry(tower_path, s.towers);
  const std::string demo_path = (fs::path(dir) / names.demographics).string();
  write_demographics(demo_path, demographics_rows(s));
  GroundTruth g = s.truth;
  g.file_hashes[names.cdr] = hex64(hash_file(cdr_path));
  g.file_hashes[names.towers] = hex64(hash_file(tower_path));
  g.file_hashes[names.demographics] = hex64(hash_file(demo_path));
  const std::string gt_path = (fs::path(dir) / names.ground_truth).string();
  std::ofstream out(gt_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + gt_path);
  out << to_json(g).dump(1) << '\n';
  return g;
}

/// Counts of true moving months, indexed by m (entry 0 unused).
inline std::vector<std::size_t> emit_month_histogram(const GroundTruth& g, int months = kWindowMonths) {
  std::vector<std::size_t> h(static_cast<std::size_t>(months + 1), 0);
  for (const auto& u : g.users)
    if (u.mover && u.m >= 1 && u.m <= months) ++h[static_cast<std::size_t>(u.m)];
  return h;
}

// ---------------------------------------------------------------------------
// Series-level generator

enum class ChangeMode : std::uint8_t { move, random, none };

struct SeriesSynthConfig {
  std::size_t n_pairs = 2000;
  double lambda = 12.0;
  double delta = 0.5;
  double p_decay = 0.57;
  double rate_sigma = 0.4;
  double rate_noise_sigma = 0.1;
  double other_rate = 24.0;  // ego calls to everyone else per month
  int pre = 4, post = 4;
  ChangeMode change = ChangeMode::move;
  std::uint64_t seed = 1;
};

struct SeriesSynth {
  std::vector<PairSeries> series;
  std::vector<Trend> truth;
  std::vector<int> change_t;  // first t under the new rate (pre+post+1 means none)
};

/// Monthly pair counts over t in [-pre, post] with a planted step. In move
/// mode the step lands between t = 0 and t = 1; in random mode it lands at a
/// uniformly drawn boundary inside the window.
inline SeriesSynth generate_pair_series(const SeriesSynthConfig& cfg) {
  SeriesSynth out;
  const int len = cfg.pre + cfg.post + 1;
  for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
    Rng rng(derive_seed(cfg.seed, "series", static_cast<std::uint64_t>(i)));
    const double base = cfg.lambda * std::exp(cfg.rate_sigma * rng.normal() - cfg.rate_sigma * cfg.rate_sigma / 2.0);
    const bool decay = rng.bernoulli(cfg.p_decay);
    const double mult = decay ? 1.0 - cfg.delta : 1.0 + cfg.delta;
    int change = len;
    if (cfg.change == ChangeMode::move) change = cfg.pre + 1;
    else if (cfg.change == ChangeMode::random) change = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 1)));
    const double p_dir = rng.uniform(0.3, 0.7);
    PairSeries s;
    s.pair = {static_cast<UserId>(2 * i), static_cast<UserId>(2 * i + 1), cfg.pre + 1, {}, {}};
    s.t_lo = -cfg.pre;
    for (int j = 0; j < len; ++j) {
      double rate = base * (j >= change ? mult : 1.0);
      if (cfg.rate_noise_sigma > 0.0)
        rate *= std::exp(cfg.rate_noise_sigma * rng.normal() - cfg.rate_noise_sigma * cfg.rate_noise_sigma / 2.0);
      const auto c = static_cast<std::uint32_t>(rng.poisson(rate));
      std::uint32_t out_calls = 0;
      for (std::uint32_t q = 0; q < c; ++q) out_calls += rng.bernoulli(p_dir);
      const auto others = static_cast<std::uint32_t>(rng.poisson(cfg.other_rate));
      s.count.push_back(c);
      s.ego_total.push_back(c + others);
      s.fraction.push_back(c + others > 0 ? static_cast<double>(c) / (c + others) : 0.0);
      s.reciprocity.push_back(reciprocity(out_calls, c - out_calls));
    }
    out.series.push_back(std::move(s));
    out.truth.push_back(decay ? Trend::decay : Trend::rise);
    out.change_t.push_back(change - cfg.pre);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle scoring

struct DetectedPair {
  std::string ego, alter;
  int m = 0;
  std::optional<Trend> cluster_trend;  // from the k = 2 clustering
  double pre_count = 0, post_count = 0;
};

struct PipelineView {
  std::string run_id;                               // ground truth run the outputs were built from
  std::map<std::string, MoverStatus> statuses;      // by user id
  std::vector<DetectedPair> pairs;
};

struct OracleReport {
  std::size_t true_movers = 0, detected_movers = 0, true_positive = 0;
  double mover_precision = 0, mover_recall = 0;
  double m_exact = 0;                // among true positives
  std::size_t eligible_planted = 0, recovered_planted = 0;
  double planted_recovery = 0;
  std::size_t clustered_planted = 0;
  double cluster_accuracy = 0;
  std::optional<double> loglog_slope, loglog_slope_se;
};

inline nlohmann::json to_json(const OracleReport& r) {
  nlohmann::json j = {{"true_movers", r.true_movers},
                      {"detected_movers", r.detected_movers},
                      {"true_positive", r.true_positive},
                      {"mover_precision", r.mover_precision},
                      {"mover_recall", r.mover_recall},
                      {"m_exact", r.m_exact},
                      {"eligible_planted", r.eligible_planted},
                      {"recovered_planted", r.recovered_planted},
                      {"planted_recovery", r.planted_recovery},
                      {"clustered_planted", r.clustered_planted},
                      {"cluster_accuracy", r.cluster_accuracy}};
  j["loglog_slope"] = r.loglog_slope ? nlohmann::json(*r.loglog_slope) : nlohmann::json(nullptr);
  j["loglog_slope_se"] = r.loglog_slope_se ? nlohmann::json(*r.loglog_slope_se) : nlohmann::json(nullptr);
  return j;
}

/// Compares pipeline outputs with the generator's ground truth. A planted
/// pair is eligible when its alter was detected as a non-mover, its ego as a
/// mover with the true m, and the move leaves room for the series window.
inline OracleReport score_pipeline(const GroundTruth& g, const PipelineView& v, int min_stay = 4, int pre = 4,
                                   int post = 4, int months = kWindowMonths) {
  if (v.run_id != g.run_id) throw ParameterError("score_pipeline: run id mismatch (" + v.run_id + " vs " + g.run_id + ")");
  OracleReport r;
  for (const auto& u : g.users) {
    auto it = v.statuses.find(u.id);
    const bool det = it != v.statuses.end() && it->second.is_mover();
    r.true_movers += u.mover;
    r.detected_movers += det;
    if (u.mover && det) {
      ++r.true_positive;
      r.m_exact += it->second.m == u.m;
    }
  }
  r.mover_precision = r.detected_movers ? static_cast<double>(r.true_positive) / r.detected_movers : 1.0;
  r.mover_recall = r.true_movers ? static_cast<double>(r.true_positive) / r.true_movers : 1.0;
  r.m_exact = r.true_positive ? r.m_exact / r.true_positive : 1.0;

  std::map<std::pair<std::string, std::string>, const DetectedPair*> found;
  for (const auto& p : v.pairs) found[{p.ego, p.alter}] = &p;
  std::size_t correct = 0;
  for (const auto& p : g.planted) {
    auto e = v.statuses.find(p.ego);
    auto a = v.statuses.find(p.alter);
    const bool eligible = e != v.statuses.end() && a != v.statuses.end() && e->second.is_mover() &&
                          e->second.m == p.m && a->second.is_non_mover() && p.m >= min_stay &&
                          months - p.m >= min_stay && p.m - pre >= 1 && p.m + post <= months;
    auto it = found.find({p.ego, p.alter});
    if (eligible) {
      ++r.eligible_planted;
      r.recovered_planted += it != found.end();
    }
    if (it != found.end() && it->second->cluster_trend) {
      ++r.clustered_planted;
      correct += *it->second->cluster_trend == p.regime;
    }
  }
  r.planted_recovery = r.eligible_planted ? static_cast<double>(r.recovered_planted) / r.eligible_planted : 1.0;
  r.cluster_accuracy = r.clustered_planted ? static_cast<double>(correct) / r.clustered_planted : 0.0;

  // OLS slope of log post-count on log pre-count over detected pairs
  std::vector<double> x, y;
  for (const auto& p : v.pairs)
    if (p.pre_count > 0 && p.post_count > 0) {
      x.push_back(std::log(p.pre_count));
      y.push_back(std::log(p.post_count));
    }
  if (x.size() >= 3) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx > 0) {
      const double b = sxy / sxx, a = my - b * mx;
      double sse = 0;
      for (std::size_t i = 0; i < x.size(); ++i) sse += (y[i] - a - b * x[i]) * (y[i] - a - b * x[i]);
      r.loglog_slope = b;
      r.loglog_slope_se = std::sqrt(sse / (n - 2) / sxx);
    }
  }
  return r;
}

}  // namespace migcdr
