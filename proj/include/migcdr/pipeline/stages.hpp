#pragma once
// Stage implementations and the manifest-checked stage runner.

#include <chrono>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "migcdr/cdr_core.hpp"
#include "migcdr/cluster_engine.hpp"
#include "migcdr/home_inference.hpp"
#include "migcdr/pair_series.hpp"
#include "migcdr/pipeline/artifacts.hpp"
#include "migcdr/pipeline/config.hpp"
#include "migcdr/pipeline/manifest.hpp"
#include "migcdr/predictor/evaluation.hpp"
#include "migcdr/predictor/features.hpp"
#include "migcdr/predictor/model_selection.hpp"
#include "migcdr/synth_gen.hpp"
#include "migcdr/tie_graph.hpp"

namespace migcdr {

namespace fs = std::filesystem;

struct StageContext {
  const RunConfig& cfg;
  fs::path out;
  unsigned threads = 1;

  fs::path dir(Stage s) const { return out / stage_name(s); }
  fs::path file(Stage s, const std::string& name) const { return dir(s) / name; }
};

struct StageResult {
  std::vector<std::string> outputs;  // relative to the output directory
  json rows = json::object();
  json notes = json::object();

  void table(const StageContext& c, Stage s, const std::string& name, const Table& t) {
    write_table(c.file(s, name), t);
    outputs.push_back(std::string(stage_name(s)) + "/" + name);
  }
  void doc(const StageContext& c, Stage s, const std::string& name, const json& j) {
    write_json(c.file(s, name), j);
    outputs.push_back(std::string(stage_name(s)) + "/" + name);
  }
};

namespace stages {

// ---------------------------------------------------------------------------
// Artifact loaders

inline Dataset load_ingested(const StageContext& c) { return load_dataset(c.file(Stage::ingest, "dataset.bin").string()); }

inline MoverStatus::Kind parse_status(const std::string& s) {
  if (s == "mover") return MoverStatus::Kind::mover;
  if (s == "non_mover") return MoverStatus::Kind::non_mover;
  return MoverStatus::Kind::unknown;
}

inline UserId user_id(const Dataset& ds, const std::string& s) {
  auto u = ds.find_user(s);
  if (!u) throw IoError("artifact names unknown user " + s);
  return *u;
}

inline ProvinceId province_of(const Dataset& ds, const std::string& code) {
  if (code.empty()) return kUnknown;
  auto p = ds.registry.province_id(code);
  if (!p) throw IoError("artifact names unknown province " + code);
  return *p;
}

inline std::vector<MoverStatus> load_statuses(const StageContext& c, const Dataset& ds) {
  const Table t = read_table(c.file(Stage::movers, "movers.csv"));
  const auto cu = t.column("user"), cs = t.column("status"), cf = t.column("from"), ct = t.column("to"),
             cm = t.column("m");
  std::vector<MoverStatus> st(ds.user_count());
  for (const auto& r : t.rows) {
    MoverStatus m;
    m.kind = parse_status(r[cs]);
    m.from = province_of(ds, r[cf]);
    m.to = province_of(ds, r[ct]);
    m.m = static_cast<int>(cell_int(r[cm]));
    st[user_id(ds, r[cu])] = m;
  }
  return st;
}

inline std::vector<StrongPair> load_pairs(const fs::path& path, const Dataset& ds, std::span<const MoverStatus> st) {
  const Table t = read_table(path);
  const auto ce = t.column("ego"), ca = t.column("alter"), cm = t.column("m");
  std::vector<StrongPair> out;
  for (const auto& r : t.rows) {
    StrongPair p;
    p.ego = user_id(ds, r[ce]);
    p.alter = user_id(ds, r[ca]);
    p.m = static_cast<int>(cell_int(r[cm]));
    p.ego_status = st[p.ego];
    p.alter_status = st[p.alter];
    out.push_back(p);
  }
  return out;
}

/// Series in file order; pairs are identified by consecutive (ego, alter) runs.
struct LoadedSeries {
  std::vector<std::string> ego, alter;
  std::vector<int> m;
  std::vector<std::vector<double>> count, fraction;
  int t_lo = 0;
};

inline LoadedSeries load_series_values(const fs::path& path) {
  const Table t = read_table(path);
  const auto ce = t.column("ego"), ca = t.column("alter"), cm = t.column("m"), ctt = t.column("t"),
             cc = t.column("count"), cf = t.column("fraction");
  LoadedSeries s;
  for (const auto& r : t.rows) {
    const bool same = !s.ego.empty() && s.ego.back() == r[ce] && s.alter.back() == r[ca];
    if (!same) {
      s.ego.push_back(r[ce]);
      s.alter.push_back(r[ca]);
      s.m.push_back(static_cast<int>(cell_int(r[cm])));
      s.count.emplace_back();
      s.fraction.emplace_back();
      if (s.ego.size() == 1) s.t_lo = static_cast<int>(cell_int(r[ctt]));
    }
    s.count.back().push_back(cell_double(r[cc]));
    s.fraction.back().push_back(cell_double(r[cf]));
  }
  return s;
}

struct SummaryRow {
  std::string ego, alter;
  int m = 0;
  PrePostSummary s;
};

inline std::vector<SummaryRow> load_summaries(const fs::path& path) {
  const Table t = read_table(path);
  std::vector<SummaryRow> out;
  for (const auto& r : t.rows) {
    SummaryRow x;
    x.ego = r[t.column("ego")];
    x.alter = r[t.column("alter")];
    x.m = static_cast<int>(cell_int(r[t.column("m")]));
    x.s.pre_count = cell_double(r[t.column("pre_count")]);
    x.s.post_count = cell_double(r[t.column("post_count")]);
    x.s.pre_frac = cell_double(r[t.column("pre_frac")]);
    x.s.post_frac = cell_double(r[t.column("post_frac")]);
    x.s.pre_recip = cell_double(r[t.column("pre_recip")]);
    x.s.post_recip = cell_double(r[t.column("post_recip")]);
    x.s.direction_count = r[t.column("trend_count")] == "decay" ? Trend::decay : Trend::rise;
    x.s.direction_frac = r[t.column("trend_frac")] == "decay" ? Trend::decay : Trend::rise;
    out.push_back(std::move(x));
  }
  return out;
}

inline const std::vector<std::string>& feature_columns() {
  static const std::vector<std::string> cols = {
      "ego",           "alter",           "m",         "count_pre",  "frac_pre",          "age_ego",
      "age_diff",      "gender_ego",      "gender_same", "distance_move", "distance_ea_pre", "towards",
      "recip_pre",     "distance_ea_post", "abs_distance_diff", "direction_tie", "count_post",  "frac_post",
      "decay_count",   "decay_frac"};
  return cols;
}

struct LoadedFeatures {
  std::vector<FeatureRow> rows;
  std::vector<std::string> ego, alter;
  std::vector<int> m;
};

inline LoadedFeatures load_features(const StageContext& c) {
  const Table t = read_table(c.file(Stage::features, "features.csv"));
  LoadedFeatures f;
  std::map<std::string, UserId> ids;
  auto id = [&](const std::string& s) {
    auto [it, fresh] = ids.emplace(s, static_cast<UserId>(ids.size()));
    (void)fresh;
    return it->second;
  };
  for (const auto& r : t.rows) {
    auto col = [&](const char* n) -> const std::string& { return r[t.column(n)]; };
    FeatureRow x;
    x.ego = id(col("ego"));
    x.alter = id(col("alter"));
    x.count_pre = cell_double(col("count_pre"));
    x.frac_pre = cell_double(col("frac_pre"));
    x.age_ego = cell_double(col("age_ego"));
    x.age_diff = cell_double(col("age_diff"));
    x.gender_ego = col("gender_ego") == "M" ? Gender::male : (col("gender_ego") == "F" ? Gender::female : Gender::unknown);
    x.gender_same = col("gender_same") == "1";
    x.distance_move = cell_double(col("distance_move"));
    x.distance_ea_pre = cell_double(col("distance_ea_pre"));
    x.towards = col("towards") == "1";
    x.recip_pre = cell_double(col("recip_pre"));
    x.distance_ea_post = cell_double(col("distance_ea_post"));
    x.abs_distance_diff = cell_double(col("abs_distance_diff"));
    x.direction_tie = col("direction_tie") == "1";
    x.count_post = cell_double(col("count_post"));
    x.frac_post = cell_double(col("frac_post"));
    x.decay_count = col("decay_count") == "1";
    x.decay_frac = col("decay_frac") == "1";
    f.rows.push_back(x);
    f.ego.push_back(col("ego"));
    f.alter.push_back(col("alter"));
    f.m.push_back(static_cast<int>(cell_int(col("m"))));
  }
  return f;
}

inline Table corr_table(const CorrMatrix& cm) {
  Table t{{"t_row", "t_col", "rho"}, {}};
  for (int s = 0; s < cm.n; ++s)
    for (int u = 0; u < cm.n; ++u) t.add(cm.t_lo + s, cm.t_lo + u, cm.at(s, u));
  return t;
}

inline Table series_table(const Dataset& ds, std::span<const PairSeries> series) {
  Table t{{"ego", "alter", "m", "t", "count", "ego_total", "fraction", "reciprocity"}, {}};
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.length(); ++i)
      t.add(ds.users[s.pair.ego], ds.users[s.pair.alter], s.pair.m, s.t_at(i), s.count[i], s.ego_total[i], s.fraction[i],
            s.reciprocity[i]);
  return t;
}

/// Month-correlation tables and block contrasts for count and fraction.
inline json write_correlations(const StageContext& c, Stage st, StageResult& res, std::span<const PairSeries> series) {
  json bc = json::object();
  for (Quantity q : {Quantity::count, Quantity::fraction, Quantity::reciprocity}) {
    const CorrMatrix cm = month_correlation_matrix(series, q);
    res.table(c, st, std::string("corr_") + quantity_name(q) + ".csv", corr_table(cm));
    bc[quantity_name(q)] = json_num(block_contrast(cm));
  }
  return bc;
}

/// Truncated-window prototypes and zero crossings for one quantity.
inline json write_truncation(const StageContext& c, Stage st, StageResult& res, Quantity q,
                             std::span<const std::vector<double>> values, int t_lo, std::span<const Trend> actual) {
  const auto windows = truncation_analysis(values, t_lo, c.cfg.windows, c.cfg.kmeans);
  Table proto{{"window_lo", "window_hi", "cluster", "trend", "t", "value", "size"}, {}};
  Table cross{{"window_lo", "window_hi", "cluster", "trend", "crossing", "midpoint", "used", "dropped_constant"}, {}};
  json out = json::array();
  for (const auto& w : windows) {
    json jw = {{"window", {w.t_lo, w.t_hi}}, {"used", w.used}, {"dropped_constant", w.dropped_constant}};
    if (w.model.k != 2) {
      jw["skipped"] = "too few non-constant series";
      out.push_back(jw);
      continue;
    }
    std::vector<Trend> sub;
    for (auto i : w.kept) sub.push_back(actual[i]);
    const Agreement ag = label_agreement(w.model.centroids, w.t_lo, w.model.labels, sub);
    std::vector<std::size_t> sizes(2, 0);
    for (int l : w.model.labels) ++sizes[static_cast<std::size_t>(l)];
    for (int k = 0; k < 2; ++k) {
      const char* tr = trend_name(ag.cluster_trend[static_cast<std::size_t>(k)]);
      for (Eigen::Index j = 0; j < w.model.centroids.cols(); ++j)
        proto.add(w.t_lo, w.t_hi, k, tr, w.t_lo + static_cast<int>(j), w.model.centroids(k, j), sizes[static_cast<std::size_t>(k)]);
      cross.add(w.t_lo, w.t_hi, k, tr, w.crossings[static_cast<std::size_t>(k)], 0.5 * (w.t_lo + w.t_hi), w.used,
                w.dropped_constant);
      jw["crossing_" + std::string(tr)] = json_num(w.crossings[static_cast<std::size_t>(k)]);
    }
    jw["agreement"] = ag.fraction;
    jw["flagged"] = ag.flagged;
    out.push_back(jw);
  }
  res.table(c, st, std::string("prototypes_") + quantity_name(q) + ".csv", proto);
  res.table(c, st, std::string("crossings_") + quantity_name(q) + ".csv", cross);
  return out;
}

inline std::vector<Trend> actual_trends(std::span<const SummaryRow> sums, Quantity q) {
  std::vector<Trend> t;
  for (const auto& s : sums) t.push_back(q == Quantity::count ? s.s.direction_count : s.s.direction_frac);
  return t;
}

// ---------------------------------------------------------------------------
// Stages

inline StageResult run_synth(const StageContext& c) {
  StageResult res;
  const SynthOutput s = generate(c.cfg.synth, c.threads);
  const GroundTruth g = write_synth(s, c.dir(Stage::synth).string());
  for (const char* f : {"cdr.csv", "towers.csv", "demographics.csv", "ground_truth.json"})
    res.outputs.push_back(std::string("synth/") + f);
  const auto hist = emit_month_histogram(g, c.cfg.synth.months);
  Table h{{"m", "movers"}, {}};
  for (std::size_t m = 1; m < hist.size(); ++m) h.add(m, hist[m]);
  res.table(c, Stage::synth, "month_histogram.csv", h);
  std::size_t movers = 0;
  for (const auto& u : g.users) movers += u.mover;
  res.rows = {{"users", s.users.size()}, {"records", s.records.size()}, {"movers", movers},
              {"planted_pairs", g.planted.size()}, {"life_events", g.life_events}};
  res.notes = {{"run_id", g.run_id}};
  return res;
}

inline StageResult run_ingest(const StageContext& c) {
  StageResult res;
  CdrSchema schema = c.cfg.schema;
  std::vector<std::string> cdr = c.cfg.cdr_paths;
  std::string towers = c.cfg.towers_path, demo = c.cfg.demographics_path;
  std::string source_run;
  if (c.cfg.uses_synth_input()) {
    cdr = {c.file(Stage::synth, "cdr.csv").string()};
    towers = c.file(Stage::synth, "towers.csv").string();
    demo = c.file(Stage::synth, "demographics.csv").string();
    schema = CdrSchema{};
    schema.window_start = c.cfg.synth.window_start;
    schema.months = c.cfg.synth.months;
    const GroundTruth g = load_ground_truth(c.file(Stage::synth, "ground_truth.json").string());
    source_run = g.run_id;
  }
  std::vector<CdrFragment> frags(cdr.size());
  parallel_for(cdr.size(), c.threads, [&](std::size_t i) { frags[i] = parse_cdr_file(cdr[i], schema); });
  TowerRegistry reg = parse_tower_registry(towers);
  std::vector<std::pair<std::string, UserProfile>> profiles;
  if (!demo.empty()) profiles = parse_demographics(demo);
  const Dataset ds = assemble_dataset(std::move(frags), profiles, std::move(reg), schema, c.cfg.dedup,
                                      c.cfg.dedup_tolerance_s);
  save_dataset(c.file(Stage::ingest, "dataset.bin").string(), ds);
  res.outputs.push_back("ingest/dataset.bin");
  const auto& st = ds.stats;
  json stats = {{"rows_read", st.rows_read},
                {"malformed", st.malformed},
                {"mirror_legs_merged", st.mirror_legs_merged},
                {"events_without_tower", st.events_without_tower},
                {"events_unregistered_tower", st.events_unregistered_tower},
                {"profiles_unmatched", st.profiles_unmatched},
                {"records", ds.records.size()},
                {"users", ds.user_count()},
                {"towers", ds.registry.size()},
                {"provinces", ds.registry.province_count()},
                {"cities", ds.registry.city_count()},
                {"window_start", ds.window_start.str()},
                {"months", ds.months},
                {"source_run_id", source_run}};
  res.doc(c, Stage::ingest, "ingest_stats.json", stats);
  res.rows = {{"records", ds.records.size()}, {"users", ds.user_count()}, {"malformed", st.malformed}};
  return res;
}

inline StageResult run_homes(const StageContext& c) {
  StageResult res;
  const Dataset ds = load_ingested(c);
  const OutgoingIndex idx(ds);
  const auto traj = infer_trajectories(ds, idx, c.cfg.homes, c.threads);
  Table t;
  t.header.push_back("user");
  for (int i = 0; i < ds.months; ++i) t.header.push_back("month_" + std::to_string(i + 1));
  std::size_t known = 0;
  for (const auto& h : traj) {
    std::vector<std::string> row{ds.users[h.user]};
    for (ProvinceId p : h.months) {
      row.push_back(ds.registry.province_code(p));
      known += p != kUnknown;
    }
    t.rows.push_back(std::move(row));
  }
  res.table(c, Stage::homes, "homes.csv", t);
  res.rows = {{"users", traj.size()}, {"known_user_months", known}};
  return res;
}

inline StageResult run_movers(const StageContext& c) {
  StageResult res;
  const Table homes = read_table(c.file(Stage::homes, "homes.csv"));
  // Province codes are interned locally; classification only needs equality.
  std::map<std::string, ProvinceId> intern;
  std::vector<std::string> codes;
  Table t{{"user", "status", "from", "to", "m"}, {}};
  const int months = static_cast<int>(homes.header.size()) - 1;
  std::vector<std::size_t> hist(static_cast<std::size_t>(months + 1), 0), hist_stay(hist.size(), 0);
  std::vector<MoverStatus> all;
  for (const auto& r : homes.rows) {
    std::vector<ProvinceId> traj;
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (r[i].empty()) {
        traj.push_back(kUnknown);
        continue;
      }
      auto [it, fresh] = intern.emplace(r[i], static_cast<ProvinceId>(codes.size()));
      if (fresh) codes.push_back(r[i]);
      traj.push_back(it->second);
    }
    const MoverStatus s = classify_trajectory(traj);
    auto code = [&](ProvinceId p) { return p == kUnknown ? std::string{} : codes[static_cast<std::size_t>(p)]; };
    t.add(r[0], status_name(s.kind), code(s.from), code(s.to), s.m);
    if (s.is_mover()) {
      ++hist[static_cast<std::size_t>(s.m)];
      if (min_stay_ok(s, c.cfg.ties.min_stay, months)) ++hist_stay[static_cast<std::size_t>(s.m)];
    }
    all.push_back(s);
  }
  res.table(c, Stage::movers, "movers.csv", t);
  Table h{{"m", "movers", "movers_min_stay"}, {}};
  for (int m = 1; m <= months; ++m) h.add(m, hist[static_cast<std::size_t>(m)], hist_stay[static_cast<std::size_t>(m)]);
  res.table(c, Stage::movers, "month_histogram.csv", h);
  const StatusCounts sc = count_statuses(all);
  res.rows = {{"movers", sc.movers}, {"non_movers", sc.non_movers}, {"unknown", sc.unknown}};
  return res;
}

inline StageResult run_ties(const StageContext& c) {
  StageResult res;
  const Dataset ds = load_ingested(c);
  const auto st = load_statuses(c, ds);
  const CallTable calls(ds);
  const TieContext ctx{ds, calls, st};
  const auto found = find_strong_pairs(ctx, c.cfg.ties, c.threads);
  Table cand{{"ego", "alter", "m", "verdict", "ranks"}, {}};
  std::map<std::string, std::size_t> verdicts;
  for (const auto& d : found.diagnostics) {
    std::string ranks;
    for (int r : d.ranks) ranks += (ranks.empty() ? "" : " ") + std::to_string(r);
    cand.add(ds.users[d.ego], ds.users[d.alter], d.m, verdict_name(d.verdict), ranks);
    ++verdicts[verdict_name(d.verdict)];
  }
  res.table(c, Stage::ties, "candidates.csv", cand);
  Table pairs{{"ego", "alter", "m"}, {}};
  std::set<UserId> egos;
  for (const auto& p : found.pairs) {
    pairs.add(ds.users[p.ego], ds.users[p.alter], p.m);
    egos.insert(p.ego);
  }
  res.table(c, Stage::ties, "strong_pairs.csv", pairs);
  Table v{{"verdict", "candidates"}, {}};
  for (const auto& [k, n] : verdicts) v.add(k, n);
  res.table(c, Stage::ties, "verdicts.csv", v);
  res.rows = {{"candidates", found.diagnostics.size()}, {"pairs", found.pairs.size()}, {"egos", egos.size()}};
  return res;
}

inline StageResult run_series(const StageContext& c) {
  StageResult res;
  const Dataset ds = load_ingested(c);
  const auto st = load_statuses(c, ds);
  const auto pairs = load_pairs(c.file(Stage::ties, "strong_pairs.csv"), ds, st);
  const CallTable calls(ds);
  const auto series = build_all_series(calls, pairs, c.cfg.ties.window_pre, c.cfg.ties.window_post, c.threads);
  res.table(c, Stage::series, "series.csv", series_table(ds, series));
  Table sum{{"ego", "alter", "m", "pre_count", "post_count", "pre_frac", "post_frac", "pre_recip", "post_recip",
             "trend_count", "trend_frac", "fraction_undefined"},
            {}};
  std::size_t undefined = 0;
  for (const auto& s : series) {
    const auto p = summarize(s, c.cfg.include_t0);
    sum.add(ds.users[s.pair.ego], ds.users[s.pair.alter], s.pair.m, p.pre_count, p.post_count, p.pre_frac, p.post_frac,
            p.pre_recip, p.post_recip, trend_name(p.direction_count), trend_name(p.direction_frac), s.fraction_undefined);
    undefined += s.fraction_undefined;
  }
  res.table(c, Stage::series, "summaries.csv", sum);
  const json bc = write_correlations(c, Stage::series, res, series);
  res.doc(c, Stage::series, "block_contrast.json", bc);
  res.rows = {{"pairs", series.size()}, {"fraction_undefined", undefined}};
  res.notes = {{"block_contrast", bc},
               {"block_contrast_thresholds", {{"shift_min", kBlockContrastShiftMin}, {"stationary_max", kBlockContrastStationaryMax}}}};
  return res;
}

inline StageResult run_cluster(const StageContext& c) {
  StageResult res;
  const auto ls = load_series_values(c.file(Stage::series, "series.csv"));
  const auto sums = load_summaries(c.file(Stage::series, "summaries.csv"));
  json summary = json::object();
  const int t_lo = -c.cfg.ties.window_pre, t_hi = c.cfg.ties.window_post;
  for (Quantity q : c.cfg.quantities) {
    const std::string qn = quantity_name(q);
    const auto& values = q == Quantity::count ? ls.count : ls.fraction;
    const auto actual = actual_trends(sums, q);
    std::vector<std::size_t> kept;
    const Matrix X = standardized_matrix(values, t_lo, t_lo, t_hi, &kept);
    json js = {{"pairs", values.size()}, {"used", kept.size()}, {"dropped_constant", values.size() - kept.size()}};
    Table quality{{"k", "silhouette", "davies_bouldin", "jaccard_mean", "jaccard", "inertia"}, {}};
    Table assign{{"ego", "alter", "m", "cluster", "cluster_trend", "actual_trend"}, {}};
    const int n = static_cast<int>(X.rows());
    if (n >= 3) {
      const int k_hi = std::min(c.cfg.k_max, n - 1);
      const KSelection sel = select_k(X, std::min(c.cfg.k_min, k_hi), k_hi, c.cfg.kmeans, c.cfg.bootstrap);
      for (const auto& cq : sel.table) {
        std::string jac;
        for (double v : cq.jaccard) jac += (jac.empty() ? "" : " ") + fmt_double(v);
        quality.add(cq.k, cq.silhouette, cq.davies_bouldin, cq.jaccard_mean(), jac, cq.inertia);
      }
      js["k_star"] = sel.k_star;
      js["k_by_silhouette"] = sel.by_silhouette;
      js["k_by_davies_bouldin"] = sel.by_davies_bouldin;
      js["k_by_jaccard"] = sel.by_jaccard;
      const ClusterModel model = kmeans(X, c.cfg.k_final, c.cfg.kmeans);
      std::vector<Trend> sub;
      for (auto i : kept) sub.push_back(actual[i]);
      const Agreement ag = label_agreement(model.centroids, t_lo, model.labels, sub);
      for (std::size_t r = 0; r < kept.size(); ++r) {
        const auto i = kept[r];
        const int l = model.labels[r];
        assign.add(ls.ego[i], ls.alter[i], ls.m[i], l, trend_name(ag.cluster_trend[static_cast<std::size_t>(l)]),
                   trend_name(actual[i]));
      }
      js["agreement"] = ag.fraction;
      js["agreement_flagged"] = ag.flagged;
      js["inertia"] = model.inertia;
      if (c.cfg.ward) {
        const auto wl = ward_labels(X, c.cfg.k_final);
        js["ward_match"] = label_match_fraction(wl, model.labels, c.cfg.k_final);
      }
    } else {
      js["skipped"] = "fewer than 3 non-constant series";
    }
    res.table(c, Stage::cluster, "quality_" + qn + ".csv", quality);
    res.table(c, Stage::cluster, "assignments_" + qn + ".csv", assign);
    js["windows"] = write_truncation(c, Stage::cluster, res, q, values, t_lo, actual);
    summary[qn] = js;
  }
  res.doc(c, Stage::cluster, "cluster_summary.json", summary);
  res.rows = {{"pairs", ls.ego.size()}};
  return res;
}

inline StageResult run_control(const StageContext& c) {
  StageResult res;
  const Dataset ds = load_ingested(c);
  const auto st = load_statuses(c, ds);
  const auto pairs = load_pairs(c.file(Stage::ties, "strong_pairs.csv"), ds, st);
  const CallTable calls(ds);
  const TieContext ctx{ds, calls, st};
  std::vector<int> months;
  std::vector<UserId> egos;
  for (std::size_t u = 0; u < st.size(); ++u) {
    if (st[u].is_mover() && min_stay_ok(st[u], c.cfg.ties.min_stay, ds.months)) months.push_back(st[u].m);
    if (st[u].is_non_mover()) egos.push_back(static_cast<UserId>(u));
  }
  const MonthSampler sampler(months, c.cfg.control_month_lo, c.cfg.control_month_hi);
  const std::size_t size = c.cfg.control_size ? c.cfg.control_size : pairs.size();
  const ControlSet cs = make_control(egos, sampler, size, derive_seed(c.cfg.seed, "control"),
                                     [&](UserId ego, int m) { return strong_alters_at(ctx, ego, m, c.cfg.ties); });
  std::vector<StrongPair> cp;
  Table tp{{"ego", "alter", "m"}, {}};
  for (const auto& p : cs.pairs) {
    cp.push_back({p.ego, p.alter, p.dummy_m, st[p.ego], st[p.alter]});
    tp.add(ds.users[p.ego], ds.users[p.alter], p.dummy_m);
  }
  res.table(c, Stage::control, "control_pairs.csv", tp);
  const auto series = build_all_series(calls, cp, c.cfg.ties.window_pre, c.cfg.ties.window_post, c.threads);
  res.table(c, Stage::control, "series.csv", series_table(ds, series));
  const json bc = write_correlations(c, Stage::control, res, series);
  json summary = {{"requested", cs.requested},
                  {"pairs", cs.pairs.size()},
                  {"egos_tried", cs.egos_tried},
                  {"partial", cs.partial},
                  {"block_contrast", bc}};
  std::vector<SummaryRow> sums;
  for (const auto& s : series) sums.push_back({ds.users[s.pair.ego], ds.users[s.pair.alter], s.pair.m, summarize(s, c.cfg.include_t0)});
  for (Quantity q : c.cfg.quantities) {
    std::vector<std::vector<double>> values;
    for (const auto& s : series) values.push_back(s.values(q));
    summary[quantity_name(q)] = {{"windows", write_truncation(c, Stage::control, res, q, values, -c.cfg.ties.window_pre,
                                                              actual_trends(sums, q))}};
  }
  res.doc(c, Stage::control, "control_summary.json", summary);
  res.rows = {{"pairs", cs.pairs.size()}, {"requested", cs.requested}};
  res.notes = {{"partial", cs.partial},
               {"block_contrast", bc},
               {"block_contrast_thresholds", {{"shift_min", kBlockContrastShiftMin}, {"stationary_max", kBlockContrastStationaryMax}}}};
  return res;
}

inline StageResult run_features(const StageContext& c) {
  StageResult res;
  const Dataset ds = load_ingested(c);
  const auto st = load_statuses(c, ds);
  const auto sums = load_summaries(c.file(Stage::series, "summaries.csv"));
  const OutgoingIndex idx(ds);
  std::vector<std::optional<FeatureRow>> rows(sums.size());
  std::vector<std::string> reason(sums.size());
  parallel_for(sums.size(), c.threads, [&](std::size_t i) {
    const auto& s = sums[i];
    StrongPair p{user_id(ds, s.ego), user_id(ds, s.alter), s.m, {}, {}};
    p.ego_status = st[p.ego];
    p.alter_status = st[p.alter];
    const int pre = s.m - 2, post = s.m + 1;  // t = -1 and t = +2
    if (pre < 0 || post >= ds.months) {
      reason[i] = "window_out_of_range";
      return;
    }
    const CityHome eh0 = city_home(ds, idx, p.ego, pre, p.ego_status.from, c.cfg.homes);
    const CityHome eh1 = city_home(ds, idx, p.ego, post, p.ego_status.to, c.cfg.homes);
    const CityHome ah0 = city_home(ds, idx, p.alter, pre, p.alter_status.from, c.cfg.homes);
    const CityHome ah1 = city_home(ds, idx, p.alter, post, p.alter_status.from, c.cfg.homes);
    if (!eh0.point || !eh1.point || !ah0.point || !ah1.point) {
      reason[i] = "home_unresolved";
      return;
    }
    rows[i] = assemble_features(p, s.s, ds.profiles[p.ego], ds.profiles[p.alter],
                                HomePoints{*eh0.point, *eh1.point, *ah0.point, *ah1.point});
    if (!rows[i]) reason[i] = "demographics_unknown";
  });
  Table t{feature_columns(), {}};
  Table dropped{{"ego", "alter", "m", "reason"}, {}};
  std::vector<FeatureRow> kept;
  auto g = [](Gender x) { return x == Gender::male ? "M" : (x == Gender::female ? "F" : ""); };
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const auto& s = sums[i];
    if (!rows[i]) {
      dropped.add(s.ego, s.alter, s.m, reason[i]);
      continue;
    }
    const FeatureRow& r = *rows[i];
    t.add(s.ego, s.alter, s.m, r.count_pre, r.frac_pre, r.age_ego, r.age_diff, g(r.gender_ego), r.gender_same,
          r.distance_move, r.distance_ea_pre, r.towards, r.recip_pre, r.distance_ea_post, r.abs_distance_diff,
          r.direction_tie, r.count_post, r.frac_post, r.decay_count, r.decay_frac);
    kept.push_back(r);
  }
  res.table(c, Stage::features, "features.csv", t);
  res.table(c, Stage::features, "dropped_pairs.csv", dropped);
  Table corr{{"a", "b", "pearson", "spearman"}, {}};
  if (kept.size() >= 3)
    for (const auto& fc : predictor_correlations(kept)) corr.add(fc.a, fc.b, fc.pearson, fc.spearman);
  res.table(c, Stage::features, "feature_correlations.csv", corr);
  res.rows = {{"rows", kept.size()}, {"dropped", dropped.rows.size()}};
  return res;
}

// Per (target, feature set, model) training unit shared by train and evaluate.
struct ModelUnit {
  Target target;
  std::string feature_set;
  std::string model;
};

inline std::vector<Params> grid_for(const RunConfig& cfg, const std::string& model, std::vector<Params> fallback) {
  auto it = cfg.grids.find(model);
  std::vector<Params> g = it != cfg.grids.end() ? it->second : std::move(fallback);
  if (model.rfind("SVR", 0) == 0)
    for (auto& p : g)
      if (!p.count("epsilon")) p["epsilon"] = cfg.svr_epsilon;
  return g;
}

struct PreparedDesign {
  Design design;
  Scaler scaler;
  Eigen::MatrixXd z_train, z_test;
  Vector y_train, y_test;
  TransformSpec spec;
};

inline PreparedDesign prepare(const RunConfig& cfg, std::span<const FeatureRow> rows, const EgoSplit& split, Target t,
                              const std::vector<FeatureId>& fs) {
  PreparedDesign p;
  p.spec = cfg.transform_spec(t, fs);
  p.design = build_design(rows, p.spec);
  const Eigen::MatrixXd xtr = take_rows(p.design.X, split.train);
  p.scaler = Scaler::fit(xtr);
  p.z_train = p.scaler.apply(xtr);
  p.z_test = p.scaler.apply(take_rows(p.design.X, split.test));
  p.y_train = take_rows(p.design.y, split.train);
  p.y_test = take_rows(p.design.y, split.test);
  return p;
}

inline std::optional<EgoSplit> load_split(const StageContext& c, const LoadedFeatures& f) {
  const Table t = read_table(c.file(Stage::train, "split.csv"));
  if (t.rows.size() != f.rows.size()) return std::nullopt;
  EgoSplit s;
  std::set<std::string> tr, te;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][t.column("set")] == "train") {
      s.train.push_back(i);
      tr.insert(f.ego[i]);
    } else {
      s.test.push_back(i);
      te.insert(f.ego[i]);
    }
  }
  if (s.train.empty() || s.test.empty()) return std::nullopt;
  return s;
}

inline StageResult run_train(const StageContext& c) {
  StageResult res;
  const auto f = load_features(c);
  json doc = {{"entries", json::array()}};
  Table split_t{{"ego", "alter", "m", "set"}, {}};
  Table cv{{"target", "feature_set", "model", "params", "cv_score"}, {}};
  std::set<std::string> unique_egos(f.ego.begin(), f.ego.end());
  if (unique_egos.size() < 2) {
    doc["skipped"] = "fewer than 2 egos with complete features";
    res.table(c, Stage::train, "split.csv", split_t);
    res.table(c, Stage::train, "cv_table.csv", cv);
    res.doc(c, Stage::train, "model_selection.json", doc);
    res.rows = {{"train", 0}, {"test", 0}, {"entries", 0}};
    return res;
  }
  std::vector<UserId> egos;
  for (const auto& r : f.rows) egos.push_back(r.ego);
  const EgoSplit split = split_by_ego(egos, c.cfg.train_fraction, derive_seed(c.cfg.seed, "split"));
  std::vector<std::string> side(f.rows.size(), "test");
  for (auto i : split.train) side[i] = "train";
  for (std::size_t i = 0; i < f.rows.size(); ++i) split_t.add(f.ego[i], f.alter[i], f.m[i], side[i]);
  res.table(c, Stage::train, "split.csv", split_t);

  for (Target t : c.cfg.targets) {
    for (const auto& [fs_name, fs] : c.cfg.feature_sets) {
      const PreparedDesign p = prepare(c.cfg, f.rows, split, t, fs);
      const std::uint64_t cv_seed = derive_seed(c.cfg.seed, "cv", static_cast<std::uint64_t>(t));
      auto record = [&](const std::string& model, const Params& best, double score, const std::vector<CvEntry>& table) {
        doc["entries"].push_back({{"target", target_name(t)},
                                  {"feature_set", fs_name},
                                  {"model", model},
                                  {"params", best},
                                  {"cv_score", score},
                                  {"cv_metric", is_classification(t) ? "average_recall" : "mse"}});
        for (const auto& e : table) cv.add(target_name(t), fs_name, model, params_str(e.params), e.score);
      };
      if (!is_classification(t)) {
        for (RegKind k : c.cfg.reg_models) {
          auto fr = fit_regression(k, p.z_train, p.y_train, grid_for(c.cfg, reg_name(k), default_grid(k)), c.cfg.folds,
                                   cv_seed, c.threads);
          record(reg_name(k), fr.best, fr.cv_score, fr.table);
        }
      } else {
        const double pos = p.y_train.sum();
        if (pos == 0 || pos == static_cast<double>(p.y_train.size())) {
          doc["entries"].push_back({{"target", target_name(t)}, {"feature_set", fs_name}, {"skipped", "single-class training set"}});
          continue;
        }
        for (ClsKind k : c.cfg.cls_models) {
          auto fr = fit_classifier(k, p.z_train, p.y_train, grid_for(c.cfg, cls_name(k), default_grid(k)), c.cfg.folds,
                                   cv_seed, c.threads);
          record(cls_name(k), fr.best, fr.cv_score, fr.table);
        }
      }
    }
  }
  res.table(c, Stage::train, "cv_table.csv", cv);
  res.doc(c, Stage::train, "model_selection.json", doc);
  res.rows = {{"train", split.train.size()}, {"test", split.test.size()}, {"entries", doc["entries"].size()}};
  return res;
}

inline StageResult run_evaluate(const StageContext& c) {
  StageResult res;
  const auto f = load_features(c);
  const json sel = read_json(c.file(Stage::train, "model_selection.json"));
  Table metrics{{"target", "feature_set", "model", "params", "cv_score", "test_mse", "test_r2", "accuracy", "recall_rise",
                 "recall_decay", "precision_rise", "precision_decay", "average_recall", "selected"},
                {}};
  Table imp{{"target", "feature_set", "model", "feature", "mean", "sd"}, {}};
  Table bayes{{"target", "feature_set", "loo_error", "bound", "conflicting_duplicates"}, {}};
  json report = {{"models", json::array()}, {"best", json::array()}, {"bayes_bound", json::array()}};
  const auto split = sel.contains("skipped") ? std::nullopt : load_split(c, f);
  if (!split || split->test.empty()) {
    report["skipped"] = "no trained models";
  } else {
    std::map<std::pair<std::string, std::string>, std::size_t> best;  // (target, set) -> entry index
    const auto& entries = sel.at("entries");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.contains("skipped")) continue;
      const auto key = std::make_pair(e.at("target").get<std::string>(), e.at("feature_set").get<std::string>());
      const bool cls = e.at("cv_metric") == "average_recall";
      auto it = best.find(key);
      if (it == best.end()) best[key] = i;
      else {
        const double s = e.at("cv_score").get<double>(), b = entries[it->second].at("cv_score").get<double>();
        if (cls ? s > b : s < b) it->second = i;
      }
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.contains("skipped")) continue;
      const Target t = parse_target_or_throw(e.at("target").get<std::string>());
      const std::string fs_name = e.at("feature_set").get<std::string>();
      const auto& fs = c.cfg.feature_sets.at(fs_name);
      const std::string model = e.at("model").get<std::string>();
      const Params params = e.at("params").get<Params>();
      const PreparedDesign p = prepare(c.cfg, f.rows, *split, t, fs);
      const bool selected = best.at({target_name(t), fs_name}) == i;
      json jm = {{"target", target_name(t)}, {"feature_set", fs_name}, {"model", model}, {"params", params},
                 {"cv_score", e.at("cv_score")}, {"selected", selected}};
      std::function<double(const Eigen::MatrixXd&)> score;
      bool minimize = false;
      if (!is_classification(t)) {
        auto m = make_regressor(*parse_reg(model), params);
        m->fit(p.z_train, p.y_train);
        const auto rep = evaluate_regression(m->predict(p.z_test), p.y_test, p.spec.target_transform);
        metrics.add(target_name(t), fs_name, model, params_str(params), e.at("cv_score").get<double>(), rep.mse, rep.r2,
                    "", "", "", "", "", "", selected);
        jm["test_mse"] = rep.mse;
        jm["test_r2"] = json_num(rep.r2);
        std::shared_ptr<Regressor> keep(std::move(m));
        score = [keep, &p](const Eigen::MatrixXd& Z) {
          return evaluate_regression(keep->predict(Z), p.y_test, p.spec.target_transform).mse;
        };
        minimize = true;
      } else {
        auto m = make_classifier(*parse_cls(model), params);
        m->fit(p.z_train, p.y_train, row_weights(p.y_train, balanced_weights(p.y_train)));
        const auto truth = to_labels(p.y_test);
        const auto rep = evaluate_classifier(m->predict(p.z_test), truth);
        metrics.add(target_name(t), fs_name, model, params_str(params), e.at("cv_score").get<double>(), "", "",
                    rep.accuracy, rep.recall[0], rep.recall[1], rep.precision[0], rep.precision[1], rep.average_recall,
                    selected);
        jm["accuracy"] = rep.accuracy;
        jm["average_recall"] = json_num(rep.average_recall);
        jm["confusion"] = rep.confusion;
        std::shared_ptr<Classifier> keep(std::move(m));
        score = [keep, truth](const Eigen::MatrixXd& Z) { return evaluate_classifier(keep->predict(Z), truth).accuracy; };
      }
      report["models"].push_back(jm);
      if (selected) {
        report["best"].push_back(jm);
        const auto entries_imp =
            permutation_importance(score, p.z_test, p.design.groups, p.design.columns, minimize, c.cfg.n_perm,
                                   derive_seed(c.cfg.seed, "importance", static_cast<std::uint64_t>(t), fnv1a64(fs_name)));
        for (const auto& ie : entries_imp) imp.add(target_name(t), fs_name, model, ie.feature, ie.mean, ie.sd);
        if (is_classification(t) && p.design.X.rows() >= 2) {
          const Eigen::MatrixXd z_all = p.scaler.apply(p.design.X);
          const auto labels = to_labels(p.design.y);
          const BayesBound bb = bayes_accuracy_upper_bound(z_all, labels);
          bayes.add(target_name(t), fs_name, bb.loo_error, bb.bound, bb.conflicting_duplicates);
          report["bayes_bound"].push_back({{"target", target_name(t)}, {"feature_set", fs_name}, {"bound", bb.bound},
                                           {"loo_error", bb.loo_error}});
        }
      }
    }
  }
  res.table(c, Stage::evaluate, "metrics.csv", metrics);
  res.table(c, Stage::evaluate, "perm_importance.csv", imp);
  res.table(c, Stage::evaluate, "bayes_bound.csv", bayes);
  res.doc(c, Stage::evaluate, "model_report.json", report);
  res.rows = {{"models", metrics.rows.size()}};
  return res;
}

// ---------------------------------------------------------------------------
// Report

inline std::string age_group(const std::optional<int>& age) {
  if (!age) return "unknown";
  static const int edges[] = {20, 30, 40, 50, 60};
  static const char* names[] = {"<20", "20-29", "30-39", "40-49", "50-59"};
  for (int i = 0; i < 5; ++i)
    if (*age < edges[i]) return names[i];
  return "60+";
}

inline const std::vector<std::string>& age_groups() {
  static const std::vector<std::string> g = {"<20", "20-29", "30-39", "40-49", "50-59", "60+", "unknown"};
  return g;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Table histogram(const std::vector<std::pair<std::string, std::vector<double>>>& cols, double bin) {
  double hi = 0;
  for (const auto& [n, v] : cols)
    for (double x : v) hi = std::max(hi, x);
  const auto bins = static_cast<std::size_t>(std::floor(hi / bin)) + 1;
  Table t{{"bin_lo_km", "bin_hi_km"}, {}};
  std::vector<std::vector<std::size_t>> counts;
  for (const auto& [n, v] : cols) {
    t.header.push_back(n);
    std::vector<std::size_t> cnt(bins, 0);
    for (double x : v) ++cnt[std::min(bins - 1, static_cast<std::size_t>(std::floor(x / bin)))];
    counts.push_back(std::move(cnt));
  }
  bool any = false;
  for (const auto& [n, v] : cols) any = any || !v.empty();
  if (!any) return t;
  for (std::size_t b = 0; b < bins; ++b) {
    std::vector<std::string> row{fmt_double(static_cast<double>(b) * bin), fmt_double(static_cast<double>(b + 1) * bin)};
    for (const auto& cnt : counts) row.push_back(std::to_string(cnt[b]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void copy_artifact(const StageContext& c, StageResult& res, Stage from, const std::string& name,
                          const std::string& as) {
  const fs::path dst = c.file(Stage::report, as);
  fs::create_directories(dst.parent_path());
  fs::copy_file(c.file(from, name), dst, fs::copy_options::overwrite_existing);
  res.outputs.push_back("report/" + as);
}

inline StageResult run_report(const StageContext& c) {
  StageResult res;
  const Dataset ds = load_ingested(c);
  const Table movers = read_table(c.file(Stage::movers, "movers.csv"));
  const auto f = load_features(c);
  const json ingest = read_json(c.file(Stage::ingest, "ingest_stats.json"));
  const json bc = read_json(c.file(Stage::series, "block_contrast.json"));
  const json clus = read_json(c.file(Stage::cluster, "cluster_summary.json"));
  const json ctrl = read_json(c.file(Stage::control, "control_summary.json"));
  const json models = read_json(c.file(Stage::evaluate, "model_report.json"));
  const Table pairs = read_table(c.file(Stage::ties, "strong_pairs.csv"));

  // Distances: one move per ego, pre/post ego-alter distance per pair.
  std::vector<double> move, ea_pre, ea_post;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < f.rows.size(); ++i) {
    if (seen.insert(f.ego[i]).second) move.push_back(f.rows[i].distance_move);
    ea_pre.push_back(f.rows[i].distance_ea_pre);
    ea_post.push_back(f.rows[i].distance_ea_post);
  }
  res.table(c, Stage::report, "move_distance_hist.csv", histogram({{"egos", move}}, c.cfg.distance_bin_km));
  res.table(c, Stage::report, "ego_alter_distance_hist.csv",
            histogram({{"pre", ea_pre}, {"post", ea_post}}, c.cfg.distance_bin_km));

  // Moving month by age group, population pyramid by status.
  const auto& groups = age_groups();
  std::map<int, std::map<std::string, std::size_t>> by_month;
  std::map<std::string, std::map<std::string, std::array<std::size_t, 3>>> pyramid;  // group -> status -> F/M/?
  std::size_t n_mover = 0, n_non = 0, n_unknown = 0;
  for (const auto& r : movers.rows) {
    const UserId u = user_id(ds, r[movers.column("user")]);
    const auto& prof = ds.profiles[u];
    const std::string status = r[movers.column("status")];
    const std::string grp = age_group(prof.age);
    if (status == "mover") {
      ++n_mover;
      ++by_month[static_cast<int>(cell_int(r[movers.column("m")]))][grp];
    } else if (status == "non_mover") {
      ++n_non;
    } else {
      ++n_unknown;
    }
    if (status == "unknown") continue;
    const std::size_t gi = prof.gender == Gender::female ? 0 : (prof.gender == Gender::male ? 1 : 2);
    ++pyramid[grp][status][gi];
  }
  Table mm{{"m"}, {}};
  for (const auto& g : groups) mm.header.push_back(g);
  for (int m = 1; m <= ds.months; ++m) {
    std::vector<std::string> row{std::to_string(m)};
    for (const auto& g : groups) row.push_back(std::to_string(by_month[m][g]));
    mm.rows.push_back(std::move(row));
  }
  res.table(c, Stage::report, "moving_month_by_age.csv", mm);
  Table pyr{{"age_group", "status", "female", "male", "unknown_gender"}, {}};
  for (const auto& g : groups)
    for (const char* s : {"mover", "non_mover"}) {
      const auto a = pyramid[g][s];
      pyr.add(g, s, a[0], a[1], a[2]);
    }
  res.table(c, Stage::report, "population_pyramid.csv", pyr);

  for (const char* q : {"count", "fraction", "reciprocity"}) {
    copy_artifact(c, res, Stage::series, std::string("corr_") + q + ".csv", std::string("mover_corr_") + q + ".csv");
    copy_artifact(c, res, Stage::control, std::string("corr_") + q + ".csv", std::string("control_corr_") + q + ".csv");
  }
  for (Quantity q : c.cfg.quantities) {
    const std::string qn = quantity_name(q);
    copy_artifact(c, res, Stage::cluster, "prototypes_" + qn + ".csv", "mover_prototypes_" + qn + ".csv");
    copy_artifact(c, res, Stage::cluster, "crossings_" + qn + ".csv", "mover_crossings_" + qn + ".csv");
    copy_artifact(c, res, Stage::cluster, "quality_" + qn + ".csv", "cluster_quality_" + qn + ".csv");
    copy_artifact(c, res, Stage::control, "prototypes_" + qn + ".csv", "control_prototypes_" + qn + ".csv");
    copy_artifact(c, res, Stage::control, "crossings_" + qn + ".csv", "control_crossings_" + qn + ".csv");
  }
  copy_artifact(c, res, Stage::evaluate, "metrics.csv", "model_metrics.csv");
  copy_artifact(c, res, Stage::evaluate, "perm_importance.csv", "perm_importance.csv");

  const double med = median_of(move);
  json metrics = {{"users", ds.user_count()},
                  {"records", ingest.at("records")},
                  {"movers", n_mover},
                  {"non_movers", n_non},
                  {"unknown", n_unknown},
                  {"strong_pairs", pairs.rows.size()},
                  {"feature_rows", f.rows.size()},
                  {"control_pairs", ctrl.at("pairs")},
                  {"median_move_km", json_num(med)},
                  {"block_contrast", {{"mover", bc}, {"control", ctrl.at("block_contrast")}}},
                  {"cluster", clus},
                  {"models", models.at("best")},
                  {"bayes_bound", models.at("bayes_bound")}};

  // Oracle comparison when the input came from the generator.
  std::optional<OracleReport> oracle;
  if (c.cfg.uses_synth_input()) {
    const GroundTruth g = load_ground_truth(c.file(Stage::synth, "ground_truth.json").string());
    PipelineView v;
    v.run_id = ingest.at("source_run_id").get<std::string>();
    for (const auto& r : movers.rows) {
      MoverStatus s;
      s.kind = parse_status(r[movers.column("status")]);
      s.m = static_cast<int>(cell_int(r[movers.column("m")]));
      v.statuses[r[movers.column("user")]] = s;
    }
    std::map<std::pair<std::string, std::string>, Trend> trend;
    if (fs::exists(c.file(Stage::cluster, "assignments_count.csv"))) {
      const Table a = read_table(c.file(Stage::cluster, "assignments_count.csv"));
      for (const auto& r : a.rows)
        trend[{r[a.column("ego")], r[a.column("alter")]}] = r[a.column("cluster_trend")] == "decay" ? Trend::decay : Trend::rise;
    }
    for (const auto& s : load_summaries(c.file(Stage::series, "summaries.csv"))) {
      DetectedPair d{s.ego, s.alter, s.m, std::nullopt, s.s.pre_count, s.s.post_count};
      if (auto it = trend.find({s.ego, s.alter}); it != trend.end()) d.cluster_trend = it->second;
      v.pairs.push_back(d);
    }
    oracle = score_pipeline(g, v, c.cfg.ties.min_stay, c.cfg.ties.window_pre, c.cfg.ties.window_post, ds.months);
    res.doc(c, Stage::report, "oracle_report.json", to_json(*oracle));
    metrics["oracle"] = to_json(*oracle);
  }
  res.doc(c, Stage::report, "metrics.json", metrics);

  std::ostringstream s;
  s << "users " << ds.user_count() << ", records " << ingest.at("records").get<std::size_t>() << "\n";
  s << "movers " << n_mover << ", non-movers " << n_non << ", unknown " << n_unknown << "\n";
  s << "strong pairs " << pairs.rows.size() << " (" << f.rows.size() << " with complete features), control pairs "
    << ctrl.at("pairs").get<std::size_t>() << "\n";
  s << "median move distance km " << (std::isnan(med) ? std::string("n/a") : fmt_double(med)) << "\n";
  for (auto it = clus.begin(); it != clus.end(); ++it) {
    s << "cluster " << it.key() << ": k* " << (it->contains("k_star") ? it->at("k_star").dump() : "n/a")
      << ", agreement " << (it->contains("agreement") ? it->at("agreement").dump() : "n/a") << "\n";
    for (const auto& w : it->at("windows"))
      s << "  window " << w.at("window").dump() << " crossings rise "
        << (w.contains("crossing_rise") ? w.at("crossing_rise").dump() : "n/a") << " decay "
        << (w.contains("crossing_decay") ? w.at("crossing_decay").dump() : "n/a") << "\n";
  }
  s << "block contrast mover " << bc.dump() << " control " << ctrl.at("block_contrast").dump() << "\n";
  for (const auto& m : models.at("best")) {
    s << "best " << m.at("target").get<std::string>() << " [" << m.at("feature_set").get<std::string>() << "] "
      << m.at("model").get<std::string>();
    if (m.contains("test_r2")) s << " R2 " << m.at("test_r2").dump() << " MSE " << m.at("test_mse").dump();
    if (m.contains("accuracy")) s << " accuracy " << m.at("accuracy").dump() << " avg recall " << m.at("average_recall").dump();
    s << "\n";
  }
  if (oracle)
    s << "oracle: mover precision " << fmt_double(oracle->mover_precision) << " recall "
      << fmt_double(oracle->mover_recall) << " m exact " << fmt_double(oracle->m_exact) << ", planted recovery "
      << fmt_double(oracle->planted_recovery) << ", cluster accuracy " << fmt_double(oracle->cluster_accuracy) << "\n";
  {
    const fs::path p = c.file(Stage::report, "summary.txt");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << s.str();
    res.outputs.push_back("report/summary.txt");
  }
  res.rows = {{"movers", n_mover}, {"pairs", pairs.rows.size()}};
  return res;
}

inline StageResult dispatch(Stage s, const StageContext& c) {
  switch (s) {
    case Stage::synth: return run_synth(c);
    case Stage::ingest: return run_ingest(c);
    case Stage::homes: return run_homes(c);
    case Stage::movers: return run_movers(c);
    case Stage::ties: return run_ties(c);
    case Stage::series: return run_series(c);
    case Stage::cluster: return run_cluster(c);
    case Stage::control: return run_control(c);
    case Stage::features: return run_features(c);
    case Stage::train: return run_train(c);
    case Stage::evaluate: return run_evaluate(c);
    case Stage::report: return run_report(c);
  }
  return {};
}

}  // namespace stages

struct StageOutcome {
  Stage stage;
  bool cache_hit = false;
  double seconds = 0.0;
  json rows;
};

/// Runs one stage after checking that its inputs exist, are intact and were
/// produced under the current configuration. An unchanged stage whose
/// outputs are intact is a no-op recorded as a cache hit.
inline StageOutcome run_stage(Stage s, const RunConfig& cfg, const fs::path& out, unsigned threads = 1) {
  Manifest man(out);
  std::map<Stage, std::string> memo;
  for (Stage u : stage_inputs(s, cfg)) {
    const std::string un = stage_name(u);
    if (!man.has(u)) throw DependencyError("run stage " + un + " first");
    if (!man.outputs_intact(u))
      throw DependencyError("artifacts of stage " + un + " are missing or modified; run stage " + un + " first");
    if (man.entry(u).at("fingerprint").get<std::string>() != stage_fingerprint(u, cfg, memo))
      throw StaleArtifactError("stage " + un + " is stale for the current configuration; run stage " + un + " first");
  }
  const std::string fp = stage_fingerprint(s, cfg, memo);
  StageOutcome oc;
  oc.stage = s;
  if (man.has(s) && man.entry(s).at("fingerprint").get<std::string>() == fp && man.outputs_intact(s)) {
    log_info(std::string("stage ") + stage_name(s) + ": up to date (cache hit)");
    man.mark_cache_hit(s);
    man.save(cfg);
    oc.cache_hit = true;
    oc.rows = man.entry(s).at("rows");
    return oc;
  }
  const StageContext ctx{cfg, out, threads};
  fs::remove_all(ctx.dir(s));
  fs::create_directories(ctx.dir(s));
  log_info(std::string("stage ") + stage_name(s) + ": running");
  const auto t0 = std::chrono::steady_clock::now();
  StageResult res = stages::dispatch(s, ctx);
  oc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json up = json::object();
  for (Stage u : stage_inputs(s, cfg)) up[stage_name(u)] = memo.at(u);
  json e = {{"fingerprint", fp},
            {"seed", cfg.seed},
            {"upstream", up},
            {"outputs", hash_outputs(out, res.outputs)},
            {"rows", res.rows},
            {"notes", res.notes},
            {"wall_clock_s", oc.seconds},
            {"threads", threads},
            {"cache_hit", false}};
  man.record(s, std::move(e));
  man.save(cfg);
  oc.rows = res.rows;
  return oc;
}

/// Every stage after synth, in order.
inline std::vector<StageOutcome> run_all(const RunConfig& cfg, const fs::path& out, unsigned threads = 1) {
  std::vector<StageOutcome> v;
  for (int i = static_cast<int>(Stage::ingest); i < kStageCount; ++i)
    v.push_back(run_stage(static_cast<Stage>(i), cfg, out, threads));
  return v;
}

}  // namespace migcdr
