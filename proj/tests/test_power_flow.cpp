#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "fdia/power/power_flow.hpp"
#include "test_support.hpp"

using namespace fdia;
using fdia::testing::fixture;

namespace {

StateVector random_state(const GridCase& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.9, 1.1), ang(-0.3, 0.3);
  StateVector x = StateVector::flat(c);
  for (Index i = 0; i < c.bus_count(); ++i) {
    x.vm[i] = mag(rng);
    x.va[i] = i == c.slack ? 0.0 : ang(rng);
  }
  return x;
}

struct Reference {
  Eigen::VectorXd vm, va;
};

Reference load_reference(const GridCase& c) {
  std::ifstream is(fdia::testing::data_path("reference/" + c.name + "_pf.json"));
  const auto doc = nlohmann::json::parse(is);
  Reference r{Eigen::VectorXd(c.bus_count()), Eigen::VectorXd(c.bus_count())};
  const auto ids = doc.at("bus_ids").get<std::vector<Index>>();
  const auto vm = doc.at("vm").get<std::vector<double>>();
  const auto va = doc.at("va").get<std::vector<double>>();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Index i = c.index_of(ids[k]);
    r.vm[i] = vm[k];
    r.va[i] = va[k];
  }
  r.va.array() -= r.va[c.slack];  // the reference file keeps the case's slack angle
  return r;
}

}  // namespace

TEST(MeasurementFunction, FlatStartLosslessBranchHasNoFlow) {
  const auto c = parse_case(nlohmann::json::parse(R"({"buses":[{"id":1,"kind":"slack"},{"id":2}],
      "branches":[{"from":1,"to":2,"r":0.02,"x":0.1,"b":0}]})"));
  const auto y = build_ybus(c);
  StateVector x = StateVector::flat(c);
  const auto h = measurement_function(y, c, x, MeasurementLayout::full(c));
  EXPECT_NEAR(h.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(MeasurementFunction, TwoBusHandEvaluation) {
  // series impedance 0.1 at 87 degrees: y = g + jb = 10 at -87 degrees
  const double deg = std::numbers::pi / 180;
  const double r = 0.1 * std::cos(87 * deg), xr = 0.1 * std::sin(87 * deg);
  const auto c = parse_case(nlohmann::json{{"buses", {{{"id", 1}, {"kind", "slack"}}, {{"id", 2}}}},
                                           {"branches", {{{"from", 1}, {"to", 2}, {"r", r}, {"x", xr}}}}});
  const double g = 10 * std::cos(-87 * deg), b = 10 * std::sin(-87 * deg);
  const double v1 = 1.0, v2 = 0.95, t1 = 0.0, t2 = -5 * deg, t12 = t1 - t2;
  // line flows, both ends, no shunts
  const double p12 = v1 * v1 * g - v1 * v2 * (g * std::cos(t12) + b * std::sin(t12));
  const double q12 = -v1 * v1 * b - v1 * v2 * (g * std::sin(t12) - b * std::cos(t12));
  const double p21 = v2 * v2 * g - v1 * v2 * (g * std::cos(-t12) + b * std::sin(-t12));
  const double q21 = -v2 * v2 * b - v1 * v2 * (g * std::sin(-t12) - b * std::cos(-t12));
  // injections via G_ij + jB_ij: G11 = g, G12 = -g
  const double p1 = v1 * v1 * g + v1 * v2 * (-g * std::cos(t12) - b * std::sin(t12));
  const double q1 = -v1 * v1 * b + v1 * v2 * (-g * std::sin(t12) + b * std::cos(t12));
  const double p2 = v2 * v2 * g + v1 * v2 * (-g * std::cos(-t12) - b * std::sin(-t12));
  const double q2 = -v2 * v2 * b + v1 * v2 * (-g * std::sin(-t12) + b * std::cos(-t12));

  StateVector x = StateVector::flat(c);
  x.vm << v1, v2;
  x.va << t1, t2;
  const auto h = measurement_function(build_ybus(c), c, x, MeasurementLayout::full(c));
  // layout: P1 P2 Q1 Q2 Pf Qf Pt Qt
  const Eigen::VectorXd expected = (Eigen::VectorXd(8) << p1, p2, q1, q2, p12, q12, p21, q21).finished();
  EXPECT_LT((h - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MeasurementFunction, InjectionEqualsIncidentFlowsPlusShunt) {
  std::mt19937_64 rng(11);
  for (const auto* name : {"ieee14", "ieee118", "ieee300"}) {
    const auto c = fixture(name);
    const auto y = build_ybus(c);
    const auto layout = MeasurementLayout::full(c);
    const MeasurementModel model(c, y, layout);
    const Index n = c.bus_count();
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = random_state(c, rng);
      const auto h = model.evaluate(x);
      Eigen::VectorXd p_sum = Eigen::VectorXd::Zero(n), q_sum = Eigen::VectorXd::Zero(n);
      for (Index k = 2 * n; k < layout.size(); ++k) {
        const Index at = layout.location(c, k);
        (layout[k].is_active() ? p_sum : q_sum)[at] += h[k];
      }
      for (Index i = 0; i < n; ++i) {
        const auto& bus = c.buses[static_cast<std::size_t>(i)];
        const double v2 = x.vm[i] * x.vm[i];
        EXPECT_NEAR(h[i], p_sum[i] + v2 * bus.gs, 1e-10) << name << " bus " << i;
        EXPECT_NEAR(h[n + i], q_sum[i] - v2 * bus.bs, 1e-10) << name << " bus " << i;
      }
    }
  }
}

TEST(Jacobian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (const auto* name : {"ieee14", "ieee118", "ieee300"}) {
    const auto c = fixture(name);
    const MeasurementModel model(c, build_ybus(c), MeasurementLayout::full(c));
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto x = random_state(c, rng);
      const Eigen::MatrixXd analytic = Eigen::MatrixXd(model.jacobian(x));
      auto f = [&](const Eigen::VectorXd& p) {
        StateVector s = x;
        s.set_parameters(p);
        return model.evaluate(s);
      };
      const auto numeric = fdia::testing::central_differences(f, x.parameters(), 1e-6);
      worst = std::max(worst, fdia::testing::max_relative_error(analytic, numeric));
    }
    EXPECT_LT(worst, 1e-5) << name;
  }
}

TEST(Jacobian, RowSparsityFollowsTopology) {
  const auto c = fixture("ieee14");
  const auto layout = MeasurementLayout::full(c);
  std::mt19937_64 rng(3);
  const auto x = random_state(c, rng);
  const Eigen::MatrixXd h = Eigen::MatrixXd(jacobian(build_ybus(c), c, x, layout));
  const auto adj = bus_neighbors(c);
  for (Index k = 0; k < layout.size(); ++k) {
    std::set<Index> allowed;
    const auto& e = layout[k];
    if (e.is_injection()) {
      allowed.insert(e.bus);
      for (Index j : adj[static_cast<std::size_t>(e.bus)]) allowed.insert(j);
    } else {
      allowed.insert(c.branches[static_cast<std::size_t>(e.branch)].from);
      allowed.insert(c.branches[static_cast<std::size_t>(e.branch)].to);
    }
    for (Index bus = 0; bus < c.bus_count(); ++bus) {
      if (allowed.count(bus)) continue;
      const Index ca = x.angle_column(bus);
      if (ca >= 0) {
        EXPECT_EQ(h(k, ca), 0.0);
      }
      EXPECT_EQ(h(k, x.magnitude_column(bus)), 0.0);
    }
  }
}

TEST(PowerFlow, ZeroInjectionCaseStaysFlat) {
  const auto c = parse_case(nlohmann::json::parse(R"({"buses":[{"id":1,"kind":"slack","v_set":1.02},
      {"id":2,"kind":"pv","v_set":1.02},{"id":3}],
      "branches":[{"from":1,"to":2,"r":0.01,"x":0.1},{"from":2,"to":3,"r":0.01,"x":0.1}]})"));
  const auto res = run_power_flow(c, build_ybus(c));
  EXPECT_NEAR(res.x.vm[0], 1.02, 1e-12);
  EXPECT_NEAR(res.x.vm[1], 1.02, 1e-12);
  EXPECT_NEAR(res.x.vm[2], 1.02, 1e-9);
  EXPECT_LE(res.mismatch, 1e-8);
  EXPECT_NEAR(res.x.va.cwiseAbs().maxCoeff(), 0.0, 1e-9);
}

TEST(PowerFlow, MatchesReferenceSolutions) {
  for (const auto* name : {"ieee14", "ieee118", "ieee300"}) {
    const auto c = fixture(name);
    const auto y = build_ybus(c);
    const auto res = run_power_flow(c, y);
    const auto ref = load_reference(c);
    EXPECT_LE(res.iterations, 10) << name;
    EXPECT_LT((res.x.vm - ref.vm).cwiseAbs().maxCoeff(), 1e-6) << name;
    EXPECT_LT((res.x.va - ref.va).cwiseAbs().maxCoeff(), 1e-6) << name;
    EXPECT_EQ(res.x.va[c.slack], 0.0);
  }
}

TEST(PowerFlow, SolutionReproducesScheduledInjectionsAndLossesArePositive) {
  for (const auto* name : {"ieee14", "ieee118", "ieee300"}) {
    const auto c = fixture(name);
    const auto y = build_ybus(c);
    const auto x = solve_power_flow(c, y);
    const auto h = measurement_function(y, c, x, MeasurementLayout::full(c));
    const Index n = c.bus_count();
    for (Index i = 0; i < n; ++i) {
      if (i == c.slack) continue;
      EXPECT_NEAR(h[i], c.p_net(i), 1e-8) << name;
      if (c.buses[static_cast<std::size_t>(i)].kind == BusKind::pq) {
        EXPECT_NEAR(h[n + i], c.q_net(i), 1e-8) << name;
      }
    }
    for (Index i = 0; i < n; ++i)
      if (c.buses[static_cast<std::size_t>(i)].is_generator()) {
        EXPECT_DOUBLE_EQ(x.vm[i], c.buses[static_cast<std::size_t>(i)].v_set);
      }
    // total injection = series + shunt losses
    EXPECT_GE(h.head(n).sum(), 0.0) << name;
  }
}

TEST(PowerFlow, InfeasibleLoadingDoesNotConverge) {
  auto c = fixture("ieee14");
  for (auto& b : c.buses) {
    b.p_load *= 50;
    b.q_load *= 50;
  }
  EXPECT_THROW(run_power_flow(c, build_ybus(c)), NumericalError);
}
