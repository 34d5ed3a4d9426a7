#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fdia/core/error.hpp"

namespace fdia {

using Index = std::ptrdiff_t;

enum class BusKind { slack, pv, pq };

inline const char* to_string(BusKind k) {
  switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
  }
  return "?";
}

/// Loads and generation in MW/MVAr; shunt in p.u. on the system base.
struct Bus {
  Index id = 0;  // original id from the case document
  BusKind kind = BusKind::pq;
  double p_load = 0, q_load = 0;
  double p_gen = 0, q_gen = 0;
  double v_set = 1.0;
  double gs = 0, bs = 0;

  bool is_generator() const { return kind != BusKind::pq; }
  bool is_zero_injection() const {
    return p_load == 0 && q_load == 0 && p_gen == 0 && q_gen == 0;
  }
};

/// Pi-model branch between internal bus indices. Impedances in p.u.
struct Branch {
  Index from = 0, to = 0;
  double r = 0, x = 0;
  double b_charging = 0;
  double tap = 1.0;
  double shift = 0.0;  // rad
};

struct GridCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  Index slack = 0;

  Index bus_count() const { return static_cast<Index>(buses.size()); }
  Index branch_count() const { return static_cast<Index>(branches.size()); }
  Index original_id(Index bus) const { return buses[static_cast<std::size_t>(bus)].id; }

  /// Internal index for an original bus id; throws if unknown.
  Index index_of(Index original) const {
    for (Index i = 0; i < bus_count(); ++i)
      if (buses[static_cast<std::size_t>(i)].id == original) return i;
    throw ConfigError("unknown bus id " + std::to_string(original));
  }

  /// Net scheduled injection (gen - load) at a bus, p.u.
  double p_net(Index i) const {
    const auto& b = buses[static_cast<std::size_t>(i)];
    return (b.p_gen - b.p_load) / base_mva;
  }
  double q_net(Index i) const {
    const auto& b = buses[static_cast<std::size_t>(i)];
    return (b.q_gen - b.q_load) / base_mva;
  }
};

/// Adjacency lists (neighbor bus indices, deduplicated, sorted).
inline std::vector<std::vector<Index>> bus_neighbors(const GridCase& c) {
  std::vector<std::vector<Index>> adj(c.buses.size());
  for (const auto& br : c.branches) {
    adj[static_cast<std::size_t>(br.from)].push_back(br.to);
    adj[static_cast<std::size_t>(br.to)].push_back(br.from);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

/// Hop distance from `source` to every bus (-1 when unreachable).
inline std::vector<Index> hop_distances(const GridCase& c, Index source) {
  const auto adj = bus_neighbors(c);
  std::vector<Index> dist(c.buses.size(), -1);
  std::queue<Index> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const Index u = q.front();
    q.pop();
    for (Index v : adj[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

/// All buses within `radius` hops of `center`, including the center, ascending.
inline std::vector<Index> k_hop_neighborhood(const GridCase& c, Index center, Index radius) {
  if (center < 0 || center >= c.bus_count()) throw ConfigError("bus index out of range");
  if (radius < 0) throw ConfigError("negative hop count");
  const auto dist = hop_distances(c, center);
  std::vector<Index> out;
  for (Index i = 0; i < c.bus_count(); ++i) {
    const auto d = dist[static_cast<std::size_t>(i)];
    if (d >= 0 && d <= radius) out.push_back(i);
  }
  return out;
}

namespace detail {

inline double number_or(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

inline double required_number(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ConfigError(where + ": missing numeric field '" + key + "'");
  return j.at(key).get<double>();
}

}  // namespace detail

/// Parses and validates a grid-case document. Bus ids may be arbitrary
/// integers; they are renumbered to 0..n-1 in document order.
inline GridCase parse_case(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("case document must be a JSON object");
  GridCase c;
  c.name = doc.value("name", std::string{"case"});
  c.base_mva = detail::number_or(doc, "base_mva", 100.0);
  if (!(c.base_mva > 0)) throw ConfigError("base_mva must be positive");
  if (!doc.contains("buses") || !doc.at("buses").is_array() || doc.at("buses").empty())
    throw ConfigError("case needs a non-empty 'buses' array");
  if (doc.contains("branches") && !doc.at("branches").is_array())
    throw ConfigError("'branches' must be an array");

  std::unordered_map<Index, Index> index_of;
  Index slack_count = 0;
  for (const auto& jb : doc.at("buses")) {
    const std::string where = "bus #" + std::to_string(c.buses.size());
    if (!jb.contains("id") || !jb.at("id").is_number_integer())
      throw ConfigError(where + ": missing integer 'id'");
    Bus b;
    b.id = jb.at("id").get<Index>();
    const auto kind = jb.value("kind", std::string{"pq"});
    if (kind == "slack" || kind == "ref") {
      b.kind = BusKind::slack;
    } else if (kind == "pv") {
      b.kind = BusKind::pv;
    } else if (kind == "pq") {
      b.kind = BusKind::pq;
    } else {
      throw ConfigError(where + ": unknown kind '" + kind + "'");
    }
    b.p_load = detail::number_or(jb, "p_load", 0);
    b.q_load = detail::number_or(jb, "q_load", 0);
    b.p_gen = detail::number_or(jb, "p_gen", 0);
    b.q_gen = detail::number_or(jb, "q_gen", 0);
    b.v_set = detail::number_or(jb, "v_set", 1.0);
    b.gs = detail::number_or(jb, "gs", 0);
    b.bs = detail::number_or(jb, "bs", 0);
    if (!(b.v_set > 0)) throw ConfigError(where + ": v_set must be positive");
    if (!index_of.emplace(b.id, c.bus_count()).second)
      throw ConfigError("duplicate bus id " + std::to_string(b.id));
    if (b.kind == BusKind::slack) {
      ++slack_count;
      c.slack = c.bus_count();
    }
    c.buses.push_back(b);
  }
  if (slack_count == 0) throw ConfigError("case has no slack bus");
  if (slack_count > 1) throw ConfigError("multiple slack buses");

  if (doc.contains("branches")) {
    for (const auto& jr : doc.at("branches")) {
      const std::string where = "branch #" + std::to_string(c.branches.size());
      Branch br;
      const auto f = static_cast<Index>(detail::required_number(jr, "from", where));
      const auto t = static_cast<Index>(detail::required_number(jr, "to", where));
      const auto fi = index_of.find(f);
      const auto ti = index_of.find(t);
      if (fi == index_of.end() || ti == index_of.end())
        throw ConfigError(where + ": endpoint references unknown bus");
      if (fi->second == ti->second) throw ConfigError(where + ": self loop");
      br.from = fi->second;
      br.to = ti->second;
      br.r = detail::number_or(jr, "r", 0);
      br.x = detail::required_number(jr, "x", where);
      br.b_charging = detail::number_or(jr, "b", 0);
      br.tap = detail::number_or(jr, "tap", 1.0);
      br.shift = detail::number_or(jr, "shift", 0.0);
      if (br.tap == 0) br.tap = 1.0;  // MATPOWER convention: 0 means no transformer
      if (br.x == 0) throw ConfigError(where + ": zero reactance");
      if (!(br.tap > 0)) throw ConfigError(where + ": tap must be positive");
      c.branches.push_back(br);
    }
  }

  const auto dist = hop_distances(c, c.slack);
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (dist[i] < 0) throw ConfigError("disconnected graph: bus " + std::to_string(c.buses[i].id) +
                                       " unreachable from slack");
  return c;
}

inline GridCase load_case(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open case file " + path);
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  auto c = parse_case(doc);
  if (!doc.contains("name")) {
    auto stem = path.substr(path.find_last_of("/\\") + 1);
    c.name = stem.substr(0, stem.find('.'));
  }
  return c;
}

inline nlohmann::json to_json(const GridCase& c) {
  nlohmann::json doc;
  doc["name"] = c.name;
  doc["base_mva"] = c.base_mva;
  auto& buses = doc["buses"] = nlohmann::json::array();
  for (const auto& b : c.buses) {
    buses.push_back({{"id", b.id}, {"kind", to_string(b.kind)}, {"p_load", b.p_load},
                     {"q_load", b.q_load}, {"p_gen", b.p_gen}, {"q_gen", b.q_gen},
                     {"v_set", b.v_set}, {"gs", b.gs}, {"bs", b.bs}});
  }
  auto& branches = doc["branches"] = nlohmann::json::array();
  for (const auto& br : c.branches) {
    branches.push_back({{"from", c.original_id(br.from)}, {"to", c.original_id(br.to)},
                        {"r", br.r}, {"x", br.x}, {"b", br.b_charging}, {"tap", br.tap},
                        {"shift", br.shift}});
  }
  return doc;
}

}  // namespace fdia
