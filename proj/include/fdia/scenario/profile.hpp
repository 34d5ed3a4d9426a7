#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdia/core/csv.hpp"
#include "fdia/core/error.hpp"
#include "fdia/core/rng.hpp"

namespace fdia {

struct LoadProfile {
  std::vector<double> samples;
  double resolution_minutes = 15.0;
  std::string label;

  std::size_t size() const { return samples.size(); }
};

/// Single numeric column, optional non-numeric header on the first line.
inline LoadProfile parse_profile(std::istream& is, const std::string& label = "profile") {
  LoadProfile p;
  p.label = label;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.find(',') != std::string::npos)
      throw ConfigError(label + ": line " + std::to_string(line_no) + " has more than one column");
    double v;
    if (!csv::parse_real(line, v)) {
      if (line_no == 1) continue;
      throw ConfigError(label + ": non-numeric value '" + line + "' on line " + std::to_string(line_no));
    }
    if (!std::isfinite(v)) throw ConfigError(label + ": non-finite value on line " + std::to_string(line_no));
    p.samples.push_back(v);
  }
  if (p.samples.empty()) throw ConfigError(label + ": profile has no numeric samples");
  if (p.samples.size() < 2) throw ConfigError(label + ": profile needs at least two samples");
  return p;
}

inline LoadProfile ingest_profile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open load profile " + path);
  return parse_profile(is, path);
}

/// Daily and weekly sinusoids plus AR(1) noise on a 15-minute grid. Stands in
/// for a measured utility load profile.
inline LoadProfile synthetic_profile(std::size_t points = 9600, std::uint64_t seed = 2023) {
  LoadProfile p;
  p.label = "synthetic";
  p.samples.resize(points);
  auto rng = make_rng(seed, "synthetic-profile");
  std::normal_distribution<double> noise(0.0, 1.0);
  constexpr double day = 96.0;
  double ar = 0.0;
  for (std::size_t t = 0; t < points; ++t) {
    const double td = static_cast<double>(t);
    ar = 0.9 * ar + 0.3 * noise(rng);
    p.samples[t] = 1000.0 + 120.0 * std::sin(2 * std::numbers::pi * (td / day - 0.3)) +
                   40.0 * std::sin(4 * std::numbers::pi * td / day) +
                   60.0 * std::sin(2 * std::numbers::pi * td / (7 * day)) + 15.0 * ar;
  }
  return p;
}

/// First T points of the profile (tiled cyclically when shorter), shifted and
/// scaled to zero mean and unit population standard deviation.
inline Eigen::VectorXd normalize_scaler(const LoadProfile& p, Eigen::Index steps) {
  if (steps < 1) throw ConfigError("scaler length must be at least 1");
  if (p.samples.empty()) throw ConfigError("empty load profile");
  Eigen::VectorXd s(steps);
  for (Eigen::Index t = 0; t < steps; ++t) s[t] = p.samples[static_cast<std::size_t>(t) % p.samples.size()];
  const double mean = s.mean();
  s.array() -= mean;
  const double sd = std::sqrt(s.squaredNorm() / static_cast<double>(steps));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
    throw ConfigError("load profile is constant over the requested horizon; cannot standardize");
  s /= sd;
  return s;
}

}  // namespace fdia
