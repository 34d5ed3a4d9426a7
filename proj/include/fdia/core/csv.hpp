#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdia/core/error.hpp"

namespace fdia::csv {

/// Shortest form that round-trips is not required; 17 significant digits is.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool parse_real(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

inline void write_table(const std::string& path, const std::vector<std::string>& header,
                        const Eigen::MatrixXd& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) os << (c ? "," : "") << format_real(values(r, c));
    os << '\n';
  }
  if (!os) throw ConfigError("write failed: " + path);
}

/// Reads a numeric table whose first line is a header.
inline Table read_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty table: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line);
  std::vector<double> flat;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ConfigError(path + ": row " + std::to_string(rows + 1) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(t.header.size()));
    for (auto& c : cells) {
      double v;
      if (!parse_real(c, v)) throw ConfigError(path + ": non-numeric cell '" + c + "'");
      flat.push_back(v);
    }
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(t.header.size());
  t.values.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) t.values(static_cast<Eigen::Index>(r), c) = flat[r * cols + c];
  return t;
}

}  // namespace fdia::csv
