#pragma once
// Run manifest: per-stage fingerprints, output hashes, row counts and timing.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "migcdr/pipeline/artifacts.hpp"
#include "migcdr/pipeline/config.hpp"

namespace migcdr {

struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StaleArtifactError : DependencyError {
  using DependencyError::DependencyError;
};

enum class Stage : int { synth, ingest, homes, movers, ties, series, cluster, control, features, train, evaluate, report };

inline constexpr int kStageCount = 12;

inline const char* stage_name(Stage s) {
  static const char* n[] = {"synth",   "ingest",  "homes",    "movers", "ties",     "series",
                            "cluster", "control", "features", "train",  "evaluate", "report"};
  return n[static_cast<int>(s)];
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  for (int i = 0; i < kStageCount; ++i)
    if (s == stage_name(static_cast<Stage>(i))) return static_cast<Stage>(i);
  return std::nullopt;
}

/// Upstream stages whose artifacts a stage reads.
inline std::vector<Stage> stage_inputs(Stage s, const RunConfig& cfg) {
  switch (s) {
    case Stage::synth: return {};
    case Stage::ingest: return cfg.uses_synth_input() ? std::vector<Stage>{Stage::synth} : std::vector<Stage>{};
    case Stage::homes: return {Stage::ingest};
    case Stage::movers: return {Stage::homes};
    case Stage::ties: return {Stage::ingest, Stage::movers};
    case Stage::series: return {Stage::ties};
    case Stage::cluster: return {Stage::series};
    case Stage::control: return {Stage::ingest, Stage::movers, Stage::ties};
    case Stage::features: return {Stage::ingest, Stage::movers, Stage::series};
    case Stage::train: return {Stage::features};
    case Stage::evaluate: return {Stage::features, Stage::train};
    case Stage::report: {
      std::vector<Stage> v{Stage::ingest, Stage::movers,   Stage::ties,  Stage::series,
                           Stage::cluster, Stage::control, Stage::features, Stage::evaluate};
      if (cfg.uses_synth_input()) v.insert(v.begin(), Stage::synth);
      return v;
    }
  }
  return {};
}

/// Config sections a stage's outputs depend on.
inline std::vector<std::string> stage_sections(Stage s) {
  switch (s) {
    case Stage::synth: return {"seed", "synth"};
    case Stage::ingest: return {"input", "ingest"};
    case Stage::homes: return {"seed", "homes"};
    case Stage::movers: return {};
    case Stage::ties: return {"ties"};
    case Stage::series: return {"series"};
    case Stage::cluster: return {"seed", "cluster"};
    case Stage::control: return {"seed", "control", "cluster"};
    case Stage::features: return {"homes"};
    case Stage::train: return {"seed", "train"};
    case Stage::evaluate: return {"seed", "evaluate"};
    case Stage::report: return {"report"};
  }
  return {};
}

/// Content hash of external input files named by the config.
inline std::string input_files_hash(const RunConfig& cfg) {
  std::string acc;
  auto add = [&](const std::string& p) {
    if (p.empty()) return;
    if (!std::filesystem::exists(p)) throw IoError("input file not found: " + p);
    acc += p + "=" + hex64(hash_file(p)) + ";";
  };
  for (const auto& p : cfg.cdr_paths) add(p);
  add(cfg.towers_path);
  add(cfg.demographics_path);
  return hex64(fnv1a64(acc));
}

/// Fingerprint of a stage under `cfg`: code version, its config sections,
/// external inputs and the fingerprints of its upstream stages.
inline std::string stage_fingerprint(Stage s, const RunConfig& cfg, std::map<Stage, std::string>& memo) {
  if (auto it = memo.find(s); it != memo.end()) return it->second;
  nlohmann::json basis;
  basis["code"] = kCodeVersion;
  basis["stage"] = stage_name(s);
  for (const auto& sec : stage_sections(s)) basis["config"][sec] = cfg.raw.at(sec);
  if (s == Stage::ingest && !cfg.uses_synth_input()) basis["inputs"] = input_files_hash(cfg);
  for (Stage u : stage_inputs(s, cfg)) basis["upstream"][stage_name(u)] = stage_fingerprint(u, cfg, memo);
  const std::string fp = hex64(fnv1a64(basis.dump()));
  memo[s] = fp;
  return fp;
}

class Manifest {
 public:
  explicit Manifest(std::filesystem::path out_dir) : dir_(std::move(out_dir)) {
    const auto p = path();
    if (std::filesystem::exists(p)) j_ = read_json(p);
    if (!j_.is_object()) j_ = nlohmann::json::object();
    if (!j_.contains("stages")) j_["stages"] = nlohmann::json::object();
  }

  std::filesystem::path path() const { return dir_ / "manifest.json"; }
  const std::filesystem::path& dir() const { return dir_; }

  bool has(Stage s) const { return j_["stages"].contains(stage_name(s)); }
  const nlohmann::json& entry(Stage s) const { return j_["stages"].at(stage_name(s)); }

  /// True when every recorded output exists with its recorded hash.
  bool outputs_intact(Stage s) const {
    if (!has(s)) return false;
    for (auto it = entry(s).at("outputs").begin(); it != entry(s).at("outputs").end(); ++it) {
      const auto p = dir_ / it.key();
      if (!std::filesystem::exists(p) || hex64(hash_file(p.string())) != it.value().get<std::string>()) return false;
    }
    return true;
  }

  void record(Stage s, nlohmann::json e) { j_["stages"][stage_name(s)] = std::move(e); }

  void mark_cache_hit(Stage s) { j_["stages"][stage_name(s)]["cache_hit"] = true; }

  void save(const RunConfig& cfg) {
    j_["code_version"] = kCodeVersion;
    j_["config"] = cfg.raw;
    write_json(path(), j_);
  }

  const nlohmann::json& json() const { return j_; }

 private:
  std::filesystem::path dir_;
  nlohmann::json j_;
};

/// Hash map of the given output files, keyed by path relative to `dir`.
inline nlohmann::json hash_outputs(const std::filesystem::path& dir, const std::vector<std::string>& rel) {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& r : rel) o[r] = hex64(hash_file((dir / r).string()));
  return o;
}

}  // namespace migcdr
