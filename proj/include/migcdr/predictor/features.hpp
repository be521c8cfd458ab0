#pragma once
// Per-pair predictors, log/logit transforms with zero substitution, k-1
// dummy encoding and train-only standardization.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "migcdr/cdr_core.hpp"
#include "migcdr/pair_series.hpp"

namespace migcdr {

using Vector = Eigen::VectorXd;

enum class FeatureId : int {
  count_pre,
  frac_pre,
  age_ego,
  age_diff,
  gender_ego,
  gender_diff,
  distance_move,
  distance_ea_pre,
  direction_move,
  recip_pre,
};
inline constexpr int kFeatureCount = 10;

inline const char* feature_name(FeatureId f) {
  static const char* names[] = {"count_pre",     "frac_pre",        "age_ego",        "age_diff",  "gender_ego",
                                "gender_diff",   "distance_move",   "distance_ea_pre", "direction_move", "recip_pre"};
  return names[static_cast<int>(f)];
}

inline std::optional<FeatureId> parse_feature(std::string_view s) {
  for (int i = 0; i < kFeatureCount; ++i)
    if (s == feature_name(static_cast<FeatureId>(i))) return static_cast<FeatureId>(i);
  return std::nullopt;
}

inline bool is_categorical(FeatureId f) {
  return f == FeatureId::gender_ego || f == FeatureId::gender_diff || f == FeatureId::direction_move;
}

inline std::vector<FeatureId> all_features() {
  std::vector<FeatureId> v;
  for (int i = 0; i < kFeatureCount; ++i) v.push_back(static_cast<FeatureId>(i));
  return v;
}

enum class Target : int { count_post, frac_post, decay_count, decay_frac };

inline const char* target_name(Target t) {
  static const char* names[] = {"count_post", "frac_post", "decay_count", "decay_frac"};
  return names[static_cast<int>(t)];
}

inline bool is_classification(Target t) { return t == Target::decay_count || t == Target::decay_frac; }

struct FeatureRow {
  UserId ego = 0;
  UserId alter = 0;
  double count_pre = 0;
  double frac_pre = 0;
  double age_ego = 0;
  double age_diff = 0;
  Gender gender_ego = Gender::unknown;
  bool gender_same = true;
  double distance_move = 0;
  double distance_ea_pre = 0;
  bool towards = true;
  double recip_pre = 0;
  // diagnostics, not used by default models
  double distance_ea_post = 0;
  double abs_distance_diff = 0;
  bool direction_tie = false;
  // targets
  double count_post = 0;
  double frac_post = 0;
  bool decay_count = false;
  bool decay_frac = false;

  double raw(FeatureId f) const {
    switch (f) {
      case FeatureId::count_pre: return count_pre;
      case FeatureId::frac_pre: return frac_pre;
      case FeatureId::age_ego: return age_ego;
      case FeatureId::age_diff: return age_diff;
      case FeatureId::gender_ego: return gender_ego == Gender::male ? 1.0 : 0.0;
      case FeatureId::gender_diff: return gender_same ? 0.0 : 1.0;
      case FeatureId::distance_move: return distance_move;
      case FeatureId::distance_ea_pre: return distance_ea_pre;
      case FeatureId::direction_move: return towards ? 0.0 : 1.0;
      case FeatureId::recip_pre: return recip_pre;
    }
    return 0.0;
  }

  double target(Target t) const {
    switch (t) {
      case Target::count_post: return count_post;
      case Target::frac_post: return frac_post;
      case Target::decay_count: return decay_count ? 1.0 : 0.0;
      case Target::decay_frac: return decay_frac ? 1.0 : 0.0;
    }
    return 0.0;
  }
};

/// Representative home points around the move: ego and alter at t = -1 and t = +2.
struct HomePoints {
  GeoPoint ego_pre, ego_post, alter_pre, alter_post;
};

/// Builds the ten predictors and the four targets for one pair. Missing
/// demographics give nullopt.
inline std::optional<FeatureRow> assemble_features(const StrongPair& pair, const PrePostSummary& s,
                                                   const UserProfile& ego, const UserProfile& alter,
                                                   const HomePoints& homes) {
  if (!ego.known() || !alter.known()) return std::nullopt;
  FeatureRow r;
  r.ego = pair.ego;
  r.alter = pair.alter;
  r.count_pre = s.pre_count;
  r.frac_pre = s.pre_frac;
  r.recip_pre = s.pre_recip;
  r.age_ego = *ego.age;
  r.age_diff = static_cast<double>(*ego.age - *alter.age);
  r.gender_ego = ego.gender;
  r.gender_same = ego.gender == alter.gender;
  r.distance_move = great_circle_km(homes.ego_pre, homes.ego_post);
  r.distance_ea_pre = great_circle_km(homes.ego_pre, homes.alter_pre);
  r.distance_ea_post = great_circle_km(homes.ego_post, homes.alter_post);
  r.abs_distance_diff = std::abs(r.distance_ea_pre - r.distance_ea_post);
  r.direction_tie = r.distance_ea_post == r.distance_ea_pre;
  r.towards = r.distance_ea_post <= r.distance_ea_pre;
  r.count_post = s.post_count;
  r.frac_post = s.post_frac;
  r.decay_count = s.direction_count == Trend::decay;
  r.decay_frac = s.direction_frac == Trend::decay;
  return r;
}

enum class Transform : int { none, log, logit };

inline const char* transform_name(Transform t) {
  switch (t) {
    case Transform::none: return "none";
    case Transform::log: return "log";
    case Transform::logit: return "logit";
  }
  return "?";
}

inline std::optional<Transform> parse_transform(std::string_view s) {
  if (s == "none") return Transform::none;
  if (s == "log") return Transform::log;
  if (s == "logit") return Transform::logit;
  return std::nullopt;
}

inline constexpr double kLogZero = 0.1;
inline constexpr double kLogitZero = 0.001;
inline constexpr double kLogitOne = 0.999;

inline double log_transform(double v) { return std::log(v > 0.0 ? v : kLogZero); }

inline double logit_transform(double p, bool* clipped = nullptr) {
  if (p >= 1.0) {
    if (clipped) *clipped = true;
    p = kLogitOne;
  } else if (p <= 0.0) {
    p = kLogitZero;
  }
  return std::log(p / (1.0 - p));
}

inline double apply_transform(Transform t, double v, bool* clipped = nullptr) {
  switch (t) {
    case Transform::none: return v;
    case Transform::log: return log_transform(v);
    case Transform::logit: return logit_transform(v, clipped);
  }
  return v;
}

inline double inverse_transform(Transform t, double v) {
  switch (t) {
    case Transform::none: return v;
    case Transform::log: return std::exp(v);
    case Transform::logit: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

struct TransformSpec {
  std::vector<FeatureId> features = all_features();
  std::array<Transform, kFeatureCount> feature_transform{};  // all none by default
  Target target = Target::count_post;
  Transform target_transform = Transform::none;

  static TransformSpec default_for(Target t) {
    TransformSpec s;
    s.target = t;
    s.feature_transform[static_cast<int>(FeatureId::count_pre)] = Transform::log;
    s.feature_transform[static_cast<int>(FeatureId::distance_move)] = Transform::log;
    s.feature_transform[static_cast<int>(FeatureId::distance_ea_pre)] = Transform::log;
    if (t == Target::count_post) s.target_transform = Transform::log;
    return s;
  }

  void validate() const {
    for (auto f : features) {
      const Transform t = feature_transform[static_cast<int>(f)];
      if (t == Transform::none) continue;
      if (is_categorical(f)) throw ParameterError(std::string("transform on categorical feature ") + feature_name(f));
      if (t == Transform::logit && f != FeatureId::frac_pre)
        throw ParameterError(std::string("logit needs a [0,1] feature: ") + feature_name(f));
      if (t == Transform::log && (f == FeatureId::age_diff || f == FeatureId::recip_pre))
        throw ParameterError(std::string("log needs a non-negative feature: ") + feature_name(f));
    }
    if (is_classification(target) && target_transform != Transform::none)
      throw ParameterError("classification targets take no transform");
    if (target_transform == Transform::logit && target != Target::frac_post)
      throw ParameterError("logit target needs frac_post");
  }
};

/// Transformed and encoded (not yet standardized) design.
struct Design {
  Eigen::MatrixXd X;
  Vector y;
  std::vector<std::string> columns;
  std::vector<std::vector<int>> groups;  // design columns per selected feature
  std::size_t clipped = 0;               // logit inputs >= 1 replaced by 0.999
};

inline Design build_design(std::span<const FeatureRow> rows, const TransformSpec& spec) {
  spec.validate();
  Design d;
  for (auto f : spec.features) {
    d.groups.push_back({static_cast<int>(d.columns.size())});
    std::string name = feature_name(f);
    if (f == FeatureId::gender_ego) name += "=M";
    else if (f == FeatureId::gender_diff) name += "=opposite";
    else if (f == FeatureId::direction_move) name += "=away";
    else if (spec.feature_transform[static_cast<int>(f)] != Transform::none)
      name = std::string(transform_name(spec.feature_transform[static_cast<int>(f)])) + "(" + name + ")";
    d.columns.push_back(std::move(name));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.X.resize(n, static_cast<Eigen::Index>(spec.features.size()));
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < spec.features.size(); ++j) {
      const FeatureId f = spec.features[j];
      bool clipped = false;
      d.X(i, static_cast<Eigen::Index>(j)) = apply_transform(spec.feature_transform[static_cast<int>(f)], r.raw(f), &clipped);
      d.clipped += clipped;
    }
    bool clipped = false;
    d.y(i) = apply_transform(spec.target_transform, r.target(spec.target), &clipped);
    d.clipped += clipped;
  }
  return d;
}

/// Column means and population standard deviations of the training rows.
struct Scaler {
  Vector mean;
  Vector sd;

  static Scaler fit(const Eigen::MatrixXd& X) {
    Scaler s;
    const double n = static_cast<double>(std::max<Eigen::Index>(1, X.rows()));
    s.mean = X.colwise().sum().transpose() / n;
    s.sd.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double var = (X.col(j).array() - s.mean(j)).square().sum() / n;
      s.sd(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) Z.col(j) = (X.col(j).array() - mean(j)) / sd(j);
    return Z;
  }
};

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline Vector take_rows(const Vector& y, std::span<const std::size_t> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct FeatureCorrelation {
  std::string a, b;
  std::optional<double> pearson;   // point-biserial when one side is binary
  std::optional<double> spearman;
};

/// Pairwise correlations among the ten predictors and the excluded
/// |pre - post ego-alter distance| diagnostic.
inline std::vector<FeatureCorrelation> predictor_correlations(std::span<const FeatureRow> rows) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;
  for (auto f : all_features()) {
    names.push_back(feature_name(f));
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r.raw(f));
    cols.push_back(std::move(c));
  }
  names.push_back("abs_distance_diff");
  std::vector<double> extra;
  for (const auto& r : rows) extra.push_back(r.abs_distance_diff);
  cols.push_back(std::move(extra));
  std::vector<FeatureCorrelation> out;
  for (std::size_t i = 0; i < cols.size(); ++i)
    for (std::size_t j = i + 1; j < cols.size(); ++j)
      out.push_back({names[i], names[j], pearson(cols[i], cols[j]),
                     rows.size() >= 3 ? spearman(cols[i], cols[j]) : std::nullopt});
  return out;
}

}  // namespace migcdr
