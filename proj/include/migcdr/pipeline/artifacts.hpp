#pragma once
// Comma-separated artifact tables and JSON files written by pipeline stages.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "migcdr/util/support.hpp"
#include "migcdr/util/text.hpp"

namespace migcdr {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("artifact table has no column " + std::string(name));
  }

  template <typename... T>
  void add(const T&... cells) {
    rows.push_back({cell(cells)...});
  }

  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt_double(v); }
  static std::string cell(const std::optional<double>& v) { return fmt_double(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }
};

inline void write_table(const std::filesystem::path& path, const Table& t) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n") != std::string::npos)
        throw IoError("artifact cell contains a delimiter: " + cells[i]);
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  if (!out) throw IoError("write failed: " + path.string());
}

inline Table read_table(const std::filesystem::path& path) {
  Table t;
  bool first = true;
  const bool ok = for_each_line(path.string(), [&](std::string_view line) {
    std::vector<std::string> cells;
    for (auto f : split_fields(line, ',')) cells.emplace_back(f);
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else if (!line.empty()) {
      if (cells.size() != t.header.size()) throw IoError("ragged artifact row in " + path.string());
      t.rows.push_back(std::move(cells));
    }
  });
  if (!ok) throw IoError("cannot read " + path.string());
  return t;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline double cell_double(const std::string& s) {
  auto v = parse_double(s);
  if (!v) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw IoError("bad numeric artifact cell '" + s + "'");
  }
  return *v;
}

inline std::optional<double> cell_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return cell_double(s);
}

inline std::int64_t cell_int(const std::string& s) {
  auto v = parse_int(s);
  if (!v) throw IoError("bad integer artifact cell '" + s + "'");
  return *v;
}

/// JSON number or null; non-finite values become null.
inline nlohmann::json json_num(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

}  // namespace migcdr
