#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tsops/simulator.hpp"

using namespace tsops;

namespace {

double max_abs_speed_deviation(const Trajectory& tr, double v_ref) {
  double worst = 0.0;
  for (std::size_t i = 1; i < tr.vehicles.size(); ++i) {
    for (double v : tr.vehicles[i].v) worst = std::max(worst, std::abs(v - v_ref));
  }
  return worst;
}

double speed_range(const Trajectory& tr, std::size_t i) {
  const auto& v = tr.vehicles[i].v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo;
}

}  // namespace

TEST(LeadProfile, StandardScheduleValues) {
  const auto p = standard_lead_profile();
  EXPECT_EQ(lead_speed(50, p), 21.0);
  EXPECT_DOUBLE_EQ(lead_speed(110, p), 19.5);
  EXPECT_EQ(lead_speed(140, p), 18.0);
  EXPECT_EQ(lead_speed(130, p), 18.0);
  EXPECT_DOUBLE_EQ(lead_speed(150, p), 19.5);
  EXPECT_EQ(lead_speed(400, p), 21.0);
  EXPECT_THROW(lead_speed(-1, p), DomainError);
  EXPECT_THROW(lead_speed(501, p, 500), DomainError);
}

TEST(LeadProfile, ValidationRejectsMalformedSchedules) {
  EXPECT_THROW((LeadProfile{{{1, 21}}}.validate()), DomainError);
  EXPECT_THROW((LeadProfile{{{0, 21}, {0, 20}}}.validate()), DomainError);
  EXPECT_THROW((LeadProfile{{{0, -1}}}.validate()), DomainError);
  EXPECT_THROW(LeadProfile{}.validate(), DomainError);
}

TEST(PlaceAvs, SpecExamples) {
  EXPECT_TRUE(place_avs(10, 0.0).empty());
  EXPECT_EQ(place_avs(10, 0.1), std::vector<std::size_t>{5});
  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i + 1;
  EXPECT_EQ(place_avs(10, 1.0), all);
  EXPECT_EQ(place_avs(10, 0.5), (std::vector<std::size_t>{1, 3, 5, 7, 9}));
  EXPECT_THROW(place_avs(10, 1.5), DomainError);
  EXPECT_THROW(place_avs(0, 0.5), DomainError);
}

TEST(PlaceAvs, DistinctSortedAndInRange) {
  for (std::size_t n = 1; n <= 30; ++n) {
    for (int k = 0; k <= 20; ++k) {
      const double mpr = k / 20.0;
      const auto av = place_avs(n, mpr);
      EXPECT_EQ(av.size(),
                static_cast<std::size_t>(std::llround(mpr * static_cast<double>(n))));
      for (std::size_t j = 0; j < av.size(); ++j) {
        EXPECT_GE(av[j], 1u);
        EXPECT_LE(av[j], n);
        if (j > 0) {
          EXPECT_GT(av[j], av[j - 1]);
        }
      }
    }
  }
}

TEST(Step, EquilibriumIsAFixedPointPerStep) {
  for (double mpr : {0.0, 0.5, 1.0}) {
    auto sc = fixtures::scenario("scenario1", mpr);
    sc.lead = constant_lead_profile(21);
    auto st = initial_state(sc);
    for (int k = 0; k < 50; ++k) {
      const auto next = step(st, k * sc.dt, sc);
      for (std::size_t i = 1; i < st.size(); ++i) {
        EXPECT_NEAR(next.v[i], st.v[i], 1e-9);
        EXPECT_NEAR(next.spacing(i), st.spacing(i), 1e-9);
      }
      st = next;
    }
  }
}

TEST(Step, EulerMatchesHandComputation) {
  Scenario sc;
  sc.n_followers = 1;
  sc.mpr = 1.0;
  sc.lead = constant_lead_profile(21);
  sc.integrator = Integrator::kEuler;
  sc.controller.kind = ControllerKind::kTsOps;
  sc.controller.theta = {0.05, 0.2};
  sc.metric_t1 = 0;
  sc.metric_t2 = 1;
  sc.t_f = 1;

  PlatoonState st = initial_state(sc);
  st.x = {100.0, 40.0};
  st.v = {21.0, 19.0};
  const auto next = step(st, 0.0, sc);

  // s = 100 - 40 - 5, dv = 2, v = 19 under the OVRV law plus the additive input.
  const double s = 55.0, dv = 2.0, v = 19.0;
  const double accel = 0.02 * (s - 21.51 - 1.71 * v) + 0.13 * dv +
                       0.05 * std::atan(0.2 * s * dv);
  EXPECT_DOUBLE_EQ(next.x[0], 100.0 + 0.1 * 21.0);
  EXPECT_DOUBLE_EQ(next.x[1], 40.0 + 0.1 * 19.0);
  EXPECT_NEAR(next.v[1], 19.0 + 0.1 * accel, 1e-14);
}

TEST(Step, EulerHumanDriverMatchesHandComputation) {
  Scenario sc;
  sc.n_followers = 1;
  sc.mpr = 0.0;
  sc.lead = constant_lead_profile(20);
  sc.integrator = Integrator::kEuler;
  PlatoonState st = initial_state(sc);
  st.x = {60.0, 20.0};
  st.v = {20.0, 22.0};
  const auto next = step(st, 0.0, sc);
  const double s = 35.0, dv = -2.0, v = 22.0;
  const double star = 2.0 + std::max(0.0, v * 1.5 - v * dv / (2 * std::sqrt(0.6 * 2.5)));
  const double accel =
      0.6 * (1 - std::pow(v / 35.0, 4) - (star / s) * (star / s));
  EXPECT_NEAR(next.v[1], 22.0 + 0.1 * accel, 1e-14);
}

TEST(Simulate, ZeroBetaMatchesNoController) {
  auto a = fixtures::scenario("scenario1", 0.3);
  a.controller.theta = {0.0, 1.0};
  auto b = a;
  b.controller.kind = ControllerKind::kNone;
  const auto ta = simulate(a);
  const auto tb = simulate(b);
  for (std::size_t i = 0; i < ta.vehicles.size(); ++i) {
    EXPECT_EQ(ta.vehicles[i].v, tb.vehicles[i].v);
    EXPECT_EQ(ta.vehicles[i].x, tb.vehicles[i].x);
  }
}

TEST(Simulate, IsDeterministic) {
  const auto sc = fixtures::scenario("scenario2", 0.4);
  const auto a = simulate(sc);
  const auto b = simulate(sc);
  ASSERT_EQ(a.t, b.t);
  for (std::size_t i = 0; i < a.vehicles.size(); ++i) {
    EXPECT_EQ(a.vehicles[i].x, b.vehicles[i].x);
    EXPECT_EQ(a.vehicles[i].v, b.vehicles[i].v);
    EXPECT_EQ(a.vehicles[i].a, b.vehicles[i].a);
    EXPECT_EQ(a.vehicles[i].u, b.vehicles[i].u);
  }
}

TEST(Simulate, EquilibriumHoldsFor500Seconds) {
  for (const char* name : {"scenario1", "scenario2"}) {
    for (double mpr : {0.0, 0.1, 0.5, 1.0}) {
      auto sc = fixtures::scenario(name, mpr);
      sc.lead = constant_lead_profile(21);
      const auto tr = simulate(sc);
      EXPECT_LT(max_abs_speed_deviation(tr, 21.0), 1e-6) << name << " " << mpr;
      for (std::size_t i = 1; i < tr.vehicles.size(); ++i) {
        for (double u : tr.vehicles[i].u) EXPECT_LT(std::abs(u), 1e-9);
      }
    }
  }
}

TEST(Simulate, SeriesAreConsistent) {
  const auto sc = fixtures::scenario("scenario1", 0.2);
  const auto tr = simulate(sc);
  ASSERT_EQ(tr.samples(), sc.steps() + 1);
  EXPECT_DOUBLE_EQ(tr.t.back(), 500.0);
  for (std::size_t i = 0; i < tr.vehicles.size(); ++i) {
    const auto& s = tr.vehicles[i];
    for (const auto* vec : {&s.x, &s.v, &s.a, &s.s, &s.dv, &s.u}) {
      EXPECT_EQ(vec->size(), tr.samples());
    }
    if (i == 0) continue;
    for (std::size_t k = 0; k < tr.samples(); k += 97) {
      EXPECT_NEAR(s.s[k], tr.vehicles[i - 1].x[k] - s.x[k] - 5.0, 1e-9);
      EXPECT_NEAR(s.dv[k], tr.vehicles[i - 1].v[k] - s.v[k], 1e-12);
    }
  }
  EXPECT_EQ(tr.av_indices, (std::vector<std::size_t>{3, 7}));
  EXPECT_EQ(tr.vehicles[3].kind, VehicleKind::kAutomated);
  EXPECT_EQ(tr.vehicles[4].kind, VehicleKind::kHuman);
}

TEST(Simulate, RecordedControlIsZeroForHumanDrivers) {
  const auto tr = simulate(fixtures::scenario("scenario1", 0.1));
  for (std::size_t i = 1; i < tr.vehicles.size(); ++i) {
    if (i == 5) continue;
    for (double u : tr.vehicles[i].u) EXPECT_EQ(u, 0.0);
  }
  const auto& u5 = tr.vehicles[5].u;
  EXPECT_GT(*std::max_element(u5.begin(), u5.end()), 0.0);
}

TEST(Simulate, OscillationGrowsUpstreamWithoutAutomation) {
  const auto tr = simulate(fixtures::scenario("scenario1", 0.0));
  EXPECT_GT(speed_range(tr, 10), speed_range(tr, 1));
  for (std::size_t i = 2; i <= 10; ++i) {
    EXPECT_GT(speed_range(tr, i), speed_range(tr, i - 1)) << "vehicle " << i;
  }
}

TEST(Simulate, FullAutomationReducesUndershootOfLastVehicle) {
  auto hv = fixtures::scenario("scenario1", 0.0);
  auto av = fixtures::scenario("scenario1", 1.0);
  const auto a = simulate(hv);
  const auto b = simulate(av);
  const auto& va = a.vehicles[10].v;
  const auto& vb = b.vehicles[10].v;
  const double under_a = 18.0 - *std::min_element(va.begin(), va.end());
  const double under_b = 18.0 - *std::min_element(vb.begin(), vb.end());
  EXPECT_LT(under_b, under_a);
}

TEST(Simulate, IntegratorOrderOnStandardScenario) {
  auto sc = fixtures::scenario("scenario1", 0.1);
  sc.t_f = 200;
  sc.metric_t2 = 200;
  auto run = [&](Integrator m, double dt) {
    auto s = sc;
    s.integrator = m;
    s.dt = dt;
    return simulate(s);
  };
  auto error = [](const Trajectory& coarse, const Trajectory& ref) {
    const auto stride = (ref.samples() - 1) / (coarse.samples() - 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < coarse.samples(); ++k) {
      for (std::size_t i = 1; i < coarse.vehicles.size(); ++i) {
        worst = std::max(worst, std::abs(coarse.vehicles[i].v[k] -
                                         ref.vehicles[i].v[k * stride]));
      }
    }
    return worst;
  };
  for (auto m : {Integrator::kRk4, Integrator::kEuler}) {
    const auto ref = run(m, 0.1 / 8);
    const double e1 = error(run(m, 0.1), ref);
    const double e2 = error(run(m, 0.05), ref);
    // Measured against a dt/8 reference the expected halving ratio is
    // (1 - 8^-p) / (2^-p - 8^-p): 16.06 for p = 4, 2.33 for p = 1.
    const double ratio = e1 / e2;
    if (m == Integrator::kRk4) {
      EXPECT_GT(ratio, 12.0) << ratio;
      EXPECT_LT(ratio, 20.0) << ratio;
    } else {
      EXPECT_GT(ratio, 1.9) << ratio;
      EXPECT_LT(ratio, 2.8) << ratio;
    }
  }
}

TEST(Safety, TunedControllerKeepsMinimumSpacing) {
  auto s1 = fixtures::scenario("scenario1", 0.5);
  EXPECT_TRUE(check_safety(simulate(s1), s1.min_safe()).empty());
  auto s2 = fixtures::scenario("scenario2", 1.0);
  EXPECT_TRUE(check_safety(simulate(s2), s2.min_safe()).empty());
}

TEST(Safety, ReportsOverlappedVehicles) {
  auto tr = fixtures::synthetic(3, 2.0, 0.5, [](std::size_t, double) { return 20.0; });
  tr.vehicles[2].s[1] = -1.0;
  tr.vehicles[3].s[3] = 1.0;
  const auto v = check_safety(tr, 2.0);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].vehicle, 2u);
  EXPECT_DOUBLE_EQ(v[0].time, 0.5);
  EXPECT_EQ(v[1].vehicle, 3u);
  EXPECT_DOUBLE_EQ(v[1].time, 1.5);
}

TEST(Safety, OrderingPreservedWhenSafe) {
  for (double mpr : {0.0, 0.3, 1.0}) {
    const auto sc = fixtures::scenario("scenario2", mpr);
    const auto tr = simulate(sc);
    ASSERT_TRUE(check_safety(tr, sc.min_safe()).empty());
    for (std::size_t k = 0; k < tr.samples(); ++k) {
      for (std::size_t i = 1; i < tr.vehicles.size(); ++i) {
        ASSERT_GT(tr.vehicles[i - 1].x[k], tr.vehicles[i].x[k]);
      }
    }
  }
}

TEST(Safety, VirtualSpacingStaysAboveMinimumAtTheBetaBound) {
  auto sc = fixtures::scenario("scenario1", 0.1);
  sc.controller.theta.beta = scenario_beta_max(sc);
  const auto tr = simulate(sc);
  const auto vs = virtual_spacing(tr, 5);
  EXPECT_GT(*std::min_element(vs.begin(), vs.end()), sc.min_safe());
}

TEST(Simulate, CollisionIsReportedWithVehicleAndTime) {
  Scenario sc;
  sc.n_followers = 1;
  sc.mpr = 1.0;
  sc.controller.kind = ControllerKind::kNone;
  // The leader stops within 2 s; the weak OVRV gains cannot brake in time.
  sc.lead = LeadProfile{{{0, 21}, {2, 0}}};
  sc.initial_spacing = {5.0};
  try {
    simulate(sc);
    FAIL() << "expected a collision";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.vehicle(), 1u);
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 5.0);
  }
}

TEST(Simulate, SpeedFloorEngagesInsteadOfReversing) {
  Scenario sc;
  sc.n_followers = 1;
  sc.mpr = 0.0;
  sc.lead = LeadProfile{{{0, 10}, {5, 0}}};
  sc.t_f = 60;
  sc.metric_t1 = 0;
  sc.metric_t2 = 60;
  const auto tr = simulate(sc);
  for (double v : tr.vehicles[1].v) EXPECT_GE(v, 0.0);
}

TEST(Scenario, ValidationRejectsBadFields) {
  auto sc = fixtures::scenario("scenario1", 0.1);
  auto bad = sc;
  bad.dt = 0.3;
  EXPECT_THROW(validate(bad), DomainError);
  bad = sc;
  bad.metric_t2 = 600;
  EXPECT_THROW(validate(bad), DomainError);
  bad = sc;
  bad.initial_spacing = {1, 2};
  EXPECT_THROW(validate(bad), DomainError);
  bad = sc;
  bad.controller.theta.beta = -1;
  EXPECT_THROW(validate(bad), DomainError);
}

TEST(Scenario, BetaBoundUsesConfiguredSpacingOrInitialSpacing) {
  auto sc = fixtures::scenario("scenario1", 0.1);
  EXPECT_NEAR(scenario_beta_max(sc), 0.0641967, 1e-7);
  sc.controller.beta_bound_spacing.reset();
  // Falls back to the AV's own initial (equilibrium) spacing, 57.42 m.
  EXPECT_NEAR(scenario_beta_max(sc), 0.0705630, 1e-7);
}

TEST(Export, TrajectoryCsvHasFixedFormat) {
  auto tr = fixtures::synthetic(1, 0.1, 0.1, [](std::size_t, double) { return 1.0 / 3.0; });
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,vehicle,kind,x,v,a,s,dv,u");
  std::getline(is, line);
  EXPECT_EQ(line, "0.000000,0,leader,0.000000,0.333333,0.000000,0.000000,0.000000,0.000000");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 14), "0.000000,1,HV,");
}
