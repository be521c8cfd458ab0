#pragma once
// Run configuration: JSON file merged over defaults, unknown keys rejected,
// typed views per stage.

#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "migcdr/cluster_engine.hpp"
#include "migcdr/home_inference.hpp"
#include "migcdr/predictor/features.hpp"
#include "migcdr/predictor/model_selection.hpp"
#include "migcdr/synth_gen.hpp"
#include "migcdr/tie_graph.hpp"

namespace migcdr {

inline constexpr const char* kCodeVersion = "0.3.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using json = nlohmann::json;

inline json default_config_json() {
  json j;
  j["seed"] = 20240601;
  j["input"] = {{"cdr", json::array()},
                {"towers", ""},
                {"demographics", ""},
                {"delimiter", ";"},
                {"window_start", "2008-01"},
                {"months", kWindowMonths},
                {"utc_offset_seconds", 0},
                {"columns",
                 {{"origin", "origin"},
                  {"peer", "peer"},
                  {"kind", "kind"},
                  {"timestamp", "timestamp"},
                  {"direction", "direction"},
                  {"tower", "tower"}}}};
  j["synth"] = to_json(SynthConfig{});
  j["synth"].erase("seed");  // derived from the run seed
  j["ingest"] = {{"dedup", true}, {"dedup_tolerance_s", 1}};
  j["homes"] = {{"weekend_days", {6, 7}}, {"night_only", nullptr}};
  j["ties"] = {{"top_k", 5},
               {"persistence_months", 3},
               {"window_pre", 4},
               {"window_post", 4},
               {"min_stay", 4},
               {"ranking", "competition"},
               {"activity", "per_month"}};
  j["series"] = {{"include_t0", "neither"}};
  j["cluster"] = {{"k_min", 2},
                  {"k_max", 8},
                  {"k_final", 2},
                  {"restarts", 10},
                  {"max_iter", 300},
                  {"tol", 1e-6},
                  {"bootstrap", 100},
                  {"bootstrap_restarts", 3},
                  {"windows", json::array({json::array({-4, 4}), json::array({-2, 4}), json::array({-4, 2})})},
                  {"quantities", {"count", "fraction"}},
                  {"ward", false}};
  j["control"] = {{"size", 0}, {"month_lo", 5}, {"month_hi", 20}};
  j["train"] = {{"train_fraction", 0.7},
                {"folds", 5},
                {"targets", {"count_post", "frac_post", "decay_count", "decay_frac"}},
                {"regression_models", {"OLS", "Ridge", "ElasticNet", "KNN", "SVR-lin", "SVR-poly", "SVR-RBF"}},
                {"classification_models", {"LogReg", "SVM-lin", "SVM-poly", "SVM-RBF"}},
                {"feature_sets",
                 {{"all",
                   {"count_pre", "frac_pre", "age_ego", "age_diff", "gender_ego", "gender_diff", "distance_move",
                    "distance_ea_pre", "direction_move", "recip_pre"}},
                  {"pre_only", {"count_pre", "frac_pre"}}}},
                {"transforms", {{"count_pre", "log"}, {"distance_move", "log"}, {"distance_ea_pre", "log"}}},
                {"target_transforms", {{"count_post", "log"}}},
                {"grids", json::object()},
                {"svr_epsilon", 0.1}};
  j["evaluate"] = {{"n_perm", 5}};
  j["report"] = {{"distance_bin_km", 50.0}};
  return j;
}

namespace detail {
// Sections whose keys are user-chosen names rather than fixed options.
inline bool free_form(const std::string& path) {
  return path == "/train/feature_sets" || path == "/train/transforms" || path == "/train/target_transforms" ||
         path == "/train/grids" || path == "/input/columns";
}

inline void merge_checked(json& base, const json& over, const std::string& path) {
  if (!over.is_object()) throw ConfigError("config: " + (path.empty() ? std::string("root") : path) + " must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string p = path + "/" + it.key();
    if (!free_form(path) && !base.contains(it.key())) throw ConfigError("config: unknown key " + p);
    if (base.contains(it.key()) && base[it.key()].is_object() && !free_form(p) && it.value().is_object())
      merge_checked(base[it.key()], it.value(), p);
    else
      base[it.key()] = it.value();
  }
}
}  // namespace detail

/// Typed, validated configuration plus the merged JSON it came from.
struct RunConfig {
  json raw;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  unsigned threads = 1;

  CdrSchema schema;
  std::vector<std::string> cdr_paths;
  std::string towers_path, demographics_path;
  SynthConfig synth;
  bool dedup = true;
  std::int64_t dedup_tolerance_s = 1;
  HomeConfig homes;
  PairFilterConfig ties;
  T0Mode include_t0 = T0Mode::neither;
  int k_min = 2, k_max = 8, k_final = 2;
  KMeansConfig kmeans;
  BootstrapConfig bootstrap;
  std::vector<std::pair<int, int>> windows;
  std::vector<Quantity> quantities;
  bool ward = false;
  std::size_t control_size = 0;
  int control_month_lo = 5, control_month_hi = 20;
  double train_fraction = 0.7;
  int folds = 5;
  std::vector<Target> targets;
  std::vector<RegKind> reg_models;
  std::vector<ClsKind> cls_models;
  std::map<std::string, std::vector<FeatureId>> feature_sets;
  std::array<Transform, kFeatureCount> transforms{};
  std::map<Target, Transform> target_transforms;
  std::map<std::string, std::vector<Params>> grids;
  double svr_epsilon = 0.1;
  int n_perm = 5;
  double distance_bin_km = 50.0;

  bool uses_synth_input() const { return cdr_paths.empty(); }

  TransformSpec transform_spec(Target t, const std::vector<FeatureId>& features) const {
    TransformSpec s;
    s.features = features;
    s.feature_transform = transforms;
    s.target = t;
    auto it = target_transforms.find(t);
    s.target_transform = it == target_transforms.end() ? Transform::none : it->second;
    return s;
  }
};

inline Target parse_target_or_throw(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == target_name(static_cast<Target>(i))) return static_cast<Target>(i);
  throw ConfigError("config: unknown target " + s);
}

/// Builds the typed view; throws ConfigError on invalid values.
inline RunConfig make_run_config(const json& merged) {
  RunConfig c;
  c.raw = merged;
  try {
    c.seed = merged.at("seed").get<std::uint64_t>();
    const auto& in = merged.at("input");
    c.cdr_paths = in.at("cdr").is_string() ? std::vector<std::string>{in.at("cdr").get<std::string>()}
                                           : in.at("cdr").get<std::vector<std::string>>();
    c.towers_path = in.at("towers").get<std::string>();
    c.demographics_path = in.at("demographics").get<std::string>();
    const auto delim = in.at("delimiter").get<std::string>();
    if (delim.size() != 1) throw ConfigError("config: input.delimiter must be one character");
    c.schema.delimiter = delim[0];
    auto ym = parse_year_month(in.at("window_start").get<std::string>());
    if (!ym) throw ConfigError("config: input.window_start must be YYYY-MM");
    c.schema.window_start = *ym;
    c.schema.months = in.at("months").get<int>();
    if (c.schema.months < 2 || c.schema.months > 31) throw ConfigError("config: input.months must be in [2,31]");
    c.schema.clock.utc_offset_seconds = in.at("utc_offset_seconds").get<std::int64_t>();
    const auto& cols = in.at("columns");
    for (auto it = cols.begin(); it != cols.end(); ++it) {
      const auto v = it.value().get<std::string>();
      if (it.key() == "origin") c.schema.origin_column = v;
      else if (it.key() == "peer") c.schema.peer_column = v;
      else if (it.key() == "kind") c.schema.kind_column = v;
      else if (it.key() == "timestamp") c.schema.timestamp_column = v;
      else if (it.key() == "direction") c.schema.direction_column = v;
      else if (it.key() == "tower") c.schema.tower_column = v;
      else throw ConfigError("config: unknown column role " + it.key());
    }
    if (!c.cdr_paths.empty() && c.towers_path.empty()) throw ConfigError("config: input.towers is required with input.cdr");

    try {
      update_from_json(c.synth, merged.at("synth"));
      c.synth.seed = derive_seed(c.seed, "synth");
      c.synth.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }

    c.dedup = merged.at("ingest").at("dedup").get<bool>();
    c.dedup_tolerance_s = merged.at("ingest").at("dedup_tolerance_s").get<std::int64_t>();
    if (c.dedup_tolerance_s < 0) throw ConfigError("config: ingest.dedup_tolerance_s must be >= 0");

    const auto& h = merged.at("homes");
    c.homes.weekend_days = h.at("weekend_days").get<std::vector<unsigned>>();
    for (unsigned d : c.homes.weekend_days)
      if (d < 1 || d > 7) throw ConfigError("config: homes.weekend_days must be ISO weekdays 1..7");
    if (!h.at("night_only").is_null()) {
      const auto v = h.at("night_only").get<std::vector<unsigned>>();
      if (v.size() != 2 || v[0] > 23 || v[1] > 24) throw ConfigError("config: homes.night_only must be [start, end] hours");
      c.homes.night_only = std::make_pair(v[0], v[1]);
    }
    c.homes.seed = c.seed;

    const auto& t = merged.at("ties");
    c.ties.top_k = t.at("top_k").get<int>();
    c.ties.persistence_months = t.at("persistence_months").get<int>();
    c.ties.window_pre = t.at("window_pre").get<int>();
    c.ties.window_post = t.at("window_post").get<int>();
    c.ties.min_stay = t.at("min_stay").get<int>();
    const auto ranking = t.at("ranking").get<std::string>();
    if (ranking == "competition") c.ties.ranking = RankingMode::competition;
    else if (ranking == "dense") c.ties.ranking = RankingMode::dense;
    else throw ConfigError("config: ties.ranking must be competition or dense");
    const auto activity = t.at("activity").get<std::string>();
    if (activity == "per_month") c.ties.activity = ActivityMode::per_month;
    else if (activity == "whole_window") c.ties.activity = ActivityMode::whole_window;
    else throw ConfigError("config: ties.activity must be per_month or whole_window");
    if (c.ties.top_k < 1 || c.ties.persistence_months < 1 || c.ties.window_pre < 1 || c.ties.window_post < 1)
      throw ConfigError("config: ties parameters must be positive");

    const auto t0 = merged.at("series").at("include_t0").get<std::string>();
    if (t0 == "neither") c.include_t0 = T0Mode::neither;
    else if (t0 == "pre") c.include_t0 = T0Mode::pre;
    else if (t0 == "post") c.include_t0 = T0Mode::post;
    else throw ConfigError("config: series.include_t0 must be pre, post or neither");

    const auto& cl = merged.at("cluster");
    c.k_min = cl.at("k_min").get<int>();
    c.k_max = cl.at("k_max").get<int>();
    c.k_final = cl.at("k_final").get<int>();
    if (c.k_min < 2 || c.k_max < c.k_min) throw ConfigError("config: cluster k range invalid");
    if (c.k_final != 2) throw ConfigError("config: cluster.k_final must be 2 (rise/decay identification)");
    c.kmeans.restarts = cl.at("restarts").get<int>();
    c.kmeans.max_iter = cl.at("max_iter").get<int>();
    c.kmeans.tol = cl.at("tol").get<double>();
    c.kmeans.seed = derive_seed(c.seed, "cluster");
    c.bootstrap.replicates = cl.at("bootstrap").get<int>();
    c.bootstrap.restarts = cl.at("bootstrap_restarts").get<int>();
    if (c.kmeans.restarts < 1 || c.kmeans.max_iter < 1 || c.bootstrap.replicates < 1)
      throw ConfigError("config: cluster iteration counts must be positive");
    for (const auto& w : cl.at("windows")) {
      const auto v = w.get<std::vector<int>>();
      if (v.size() != 2 || v[0] >= v[1] || v[0] < -c.ties.window_pre || v[1] > c.ties.window_post)
        throw ConfigError("config: cluster.windows entries must be [lo, hi] inside the series window");
      c.windows.emplace_back(v[0], v[1]);
    }
    for (const auto& q : cl.at("quantities")) {
      const auto s = q.get<std::string>();
      if (s == "count") c.quantities.push_back(Quantity::count);
      else if (s == "fraction") c.quantities.push_back(Quantity::fraction);
      else throw ConfigError("config: cluster.quantities must be count or fraction");
    }
    c.ward = cl.at("ward").get<bool>();

    const auto& ct = merged.at("control");
    c.control_size = ct.at("size").get<std::size_t>();
    c.control_month_lo = ct.at("month_lo").get<int>();
    c.control_month_hi = ct.at("month_hi").get<int>();
    if (c.control_month_lo - c.ties.window_pre < 1 || c.control_month_hi + c.ties.window_post > c.schema.months)
      throw ConfigError("config: control month range must leave room for the series window");

    const auto& tr = merged.at("train");
    c.train_fraction = tr.at("train_fraction").get<double>();
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("config: train.train_fraction must be in (0,1)");
    c.folds = tr.at("folds").get<int>();
    if (c.folds < 2) throw ConfigError("config: train.folds must be >= 2");
    for (const auto& s : tr.at("targets")) c.targets.push_back(parse_target_or_throw(s.get<std::string>()));
    for (const auto& s : tr.at("regression_models")) {
      auto k = parse_reg(s.get<std::string>());
      if (!k) throw ConfigError("config: unknown regression model " + s.get<std::string>());
      c.reg_models.push_back(*k);
    }
    for (const auto& s : tr.at("classification_models")) {
      auto k = parse_cls(s.get<std::string>());
      if (!k) throw ConfigError("config: unknown classification model " + s.get<std::string>());
      c.cls_models.push_back(*k);
    }
    for (auto it = tr.at("feature_sets").begin(); it != tr.at("feature_sets").end(); ++it) {
      std::vector<FeatureId> fs;
      for (const auto& f : it.value()) {
        auto id = parse_feature(f.get<std::string>());
        if (!id) throw ConfigError("config: unknown feature " + f.get<std::string>());
        fs.push_back(*id);
      }
      if (fs.empty()) throw ConfigError("config: empty feature set " + it.key());
      c.feature_sets[it.key()] = fs;
    }
    for (auto it = tr.at("transforms").begin(); it != tr.at("transforms").end(); ++it) {
      auto id = parse_feature(it.key());
      auto t2 = parse_transform(it.value().get<std::string>());
      if (!id || !t2) throw ConfigError("config: bad transform entry " + it.key());
      c.transforms[static_cast<int>(*id)] = *t2;
    }
    for (auto it = tr.at("target_transforms").begin(); it != tr.at("target_transforms").end(); ++it) {
      auto t2 = parse_transform(it.value().get<std::string>());
      if (!t2) throw ConfigError("config: bad target transform " + it.key());
      c.target_transforms[parse_target_or_throw(it.key())] = *t2;
    }
    for (auto it = tr.at("grids").begin(); it != tr.at("grids").end(); ++it) {
      if (!parse_reg(it.key()) && !parse_cls(it.key())) throw ConfigError("config: grid for unknown model " + it.key());
      std::vector<Params> g;
      for (const auto& p : it.value()) g.push_back(p.get<Params>());
      c.grids[it.key()] = g;
    }
    c.svr_epsilon = tr.at("svr_epsilon").get<double>();
    for (Target t3 : c.targets)
      for (const auto& [name, fs] : c.feature_sets) {
        try {
          c.transform_spec(t3, fs).validate();
        } catch (const ParameterError& e) {
          throw ConfigError(std::string("config: ") + e.what());
        }
      }

    c.n_perm = merged.at("evaluate").at("n_perm").get<int>();
    if (c.n_perm < 1) throw ConfigError("config: evaluate.n_perm must be >= 1");
    c.distance_bin_km = merged.at("report").at("distance_bin_km").get<double>();
    if (!(c.distance_bin_km > 0)) throw ConfigError("config: report.distance_bin_km must be > 0");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

/// Loads a JSON config (empty path = defaults), applies the seed override.
inline RunConfig load_run_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  json merged = default_config_json();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path);
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    detail::merge_checked(merged, user, "");
  }
  if (seed_override) merged["seed"] = *seed_override;
  return make_run_config(merged);
}

inline RunConfig run_config_from_json(const json& user, std::optional<std::uint64_t> seed_override = std::nullopt) {
  json merged = default_config_json();
  detail::merge_checked(merged, user, "");
  if (seed_override) merged["seed"] = *seed_override;
  return make_run_config(merged);
}

}  // namespace migcdr
