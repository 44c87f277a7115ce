#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tsops/dynamics.hpp"

using namespace tsops;

namespace {

oracle::Idm to_oracle(const IdmParams& p) {
  return {p.a, p.b, p.v0, p.s0, p.T, p.delta};
}

}  // namespace

TEST(Idm, AtRestAtJamSpacingIsExactlyStationary) {
  EXPECT_EQ(idm_accel({2.0, 0.0, 0.0}, kIdmLowOscillation), 0.0);
}

TEST(Idm, EquilibriumGapMatchesBisection) {
  const double low = oracle::idm_equilibrium(to_oracle(kIdmLowOscillation), 21);
  const double high =
      oracle::idm_equilibrium(to_oracle(kIdmHighOscillation), 21);
  EXPECT_NEAR(low, 35.907, 1e-3);
  EXPECT_NEAR(high, 52.50, 5e-3);
  EXPECT_NEAR(equilibrium_spacing(kIdmLowOscillation, 21), low, 1e-9);
  EXPECT_NEAR(equilibrium_spacing(kIdmHighOscillation, 21), high, 1e-9);
  EXPECT_LT(std::abs(idm_accel({35.907, 0, 21}, kIdmLowOscillation)), 1e-4);
  EXPECT_LT(std::abs(idm_accel({low, 0, 21}, kIdmLowOscillation)), 1e-6);
  EXPECT_LT(std::abs(idm_accel({high, 0, 21}, kIdmHighOscillation)), 1e-6);
}

TEST(Idm, MatchesIndependentFormulaAwayFromEquilibrium) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> s(3, 120), dv(-6, 6), v(0, 33);
  for (const auto& p : {kIdmLowOscillation, kIdmHighOscillation}) {
    for (int k = 0; k < 500; ++k) {
      const CarFollowingInput in{s(rng), dv(rng), v(rng)};
      EXPECT_NEAR(idm_accel(in, p),
                  oracle::idm(to_oracle(p), in.spacing, in.relative_speed,
                              in.speed),
                  1e-12 * std::max(1.0, std::abs(idm_accel(in, p))));
    }
  }
}

TEST(Idm, IsNotClampedAtComfortableDeceleration) {
  const double a = idm_accel({5.0, -5.0, 25.0}, kIdmLowOscillation);
  EXPECT_LT(a, -kIdmLowOscillation.b);
}

TEST(Idm, RejectsInvalidInputs) {
  EXPECT_THROW(idm_accel({0.0, 0, 10}, kIdmLowOscillation), DomainError);
  EXPECT_THROW(idm_accel({-1.0, 0, 10}, kIdmLowOscillation), DomainError);
  EXPECT_THROW(idm_accel({10.0, 0, -1}, kIdmLowOscillation), DomainError);
  EXPECT_THROW(idm_accel({std::nan(""), 0, 10}, kIdmLowOscillation),
               DomainError);
  EXPECT_THROW(
      idm_accel({10, std::numeric_limits<double>::infinity(), 10},
                kIdmLowOscillation),
      DomainError);
  IdmParams bad = kIdmLowOscillation;
  bad.b = 0;
  EXPECT_THROW(validate(bad), DomainError);
}

TEST(Idm, EquilibriumResidualVanishesUpTo95PercentOfFreeSpeed) {
  for (const auto& p : {kIdmLowOscillation, kIdmHighOscillation}) {
    for (int k = 0; k <= 200; ++k) {
      const double v = 0.95 * p.v0 * k / 200.0;
      const double s = equilibrium_spacing(p, v);
      EXPECT_LT(std::abs(idm_accel({s, 0, v}, p)), 1e-6) << "v=" << v;
    }
  }
}

TEST(Idm, NoEquilibriumAtOrAboveFreeSpeed) {
  EXPECT_THROW(equilibrium_spacing(kIdmLowOscillation, 35.0),
               NoEquilibriumError);
  EXPECT_THROW(equilibrium_spacing(kIdmLowOscillation, 40.0),
               NoEquilibriumError);
  EXPECT_EQ(equilibrium_spacing(kIdmLowOscillation, 0.0), 2.0);
}

TEST(Ovrv, HandValues) {
  EXPECT_NEAR(ovrv_accel({57.42, 0, 21}, kOvrvDefault), 0.0, 1e-12);
  EXPECT_EQ(ovrv_accel({21.51, 0, 0}, kOvrvDefault), 0.0);
  EXPECT_NEAR(ovrv_accel({58.42, 0, 21}, kOvrvDefault), 0.02, 1e-12);
  EXPECT_NEAR(equilibrium_spacing(kOvrvDefault, 21), 57.42, 1e-12);
}

TEST(Ovrv, IsExactlyLinearInSpacing) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> s(1, 100), dv(-5, 5), v(0, 30),
      shift(-50, 50);
  for (int k = 0; k < 1000; ++k) {
    const CarFollowingInput in{s(rng), dv(rng), v(rng)};
    const double d = shift(rng);
    const double lhs = ovrv_accel({in.spacing + d, in.relative_speed, in.speed},
                                  kOvrvDefault) -
                       ovrv_accel(in, kOvrvDefault);
    EXPECT_NEAR(lhs, kOvrvDefault.k1 * d, 1e-12);
  }
}

TEST(Equilibrium, SpacingStrictlyIncreasesWithSpeed) {
  for (const ModelKind& m :
       {ModelKind{kIdmLowOscillation}, ModelKind{kIdmHighOscillation},
        ModelKind{kOvrvDefault}}) {
    double prev = -1.0;
    for (int k = 0; k <= 300; ++k) {
      const double v = 0.1 * k;
      const double s = equilibrium_spacing(m, v);
      EXPECT_GT(s, prev) << "v=" << v;
      prev = s;
    }
  }
}

TEST(Partials, MatchFiniteDifferences) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> s(5, 100), dv(-5, 5), v(1, 30);
  for (const ModelKind& m :
       {ModelKind{kIdmLowOscillation}, ModelKind{kIdmHighOscillation},
        ModelKind{kOvrvDefault}}) {
    for (int k = 0; k < 200; ++k) {
      const CarFollowingInput in{s(rng), dv(rng), v(rng)};
      const auto p = accel_partials(in, m);
      const double h = 1e-6;
      auto f = [&](double ds, double ddv, double dvv) {
        return accel({in.spacing + ds, in.relative_speed + ddv, in.speed + dvv},
                     m);
      };
      EXPECT_NEAR(p.d_spacing, (f(h, 0, 0) - f(-h, 0, 0)) / (2 * h), 1e-6);
      EXPECT_NEAR(p.d_relative_speed, (f(0, h, 0) - f(0, -h, 0)) / (2 * h),
                  1e-6);
      EXPECT_NEAR(p.d_speed, (f(0, 0, h) - f(0, 0, -h)) / (2 * h), 1e-6);
    }
  }
}

TEST(Rdc, BothModelsPassOnStandardGrid) {
  for (const ModelKind& m :
       {ModelKind{kIdmLowOscillation}, ModelKind{kIdmHighOscillation},
        ModelKind{kOvrvDefault}}) {
    const auto r = rdc_check(m, SamplingGrid{});
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.points_checked, 20u * 21u * 16u);
    EXPECT_FALSE(r.first_violation.has_value());
  }
}

TEST(Rdc, NegativeSpacingGainFailsAtFirstSample) {
  OvrvParams bad = kOvrvDefault;
  bad.k1 = -0.02;
  const auto r = rdc_check(ModelKind{bad}, SamplingGrid{});
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.points_checked, 1u);
  ASSERT_TRUE(r.first_violation.has_value());
  EXPECT_EQ(r.first_violation->condition, "da/ds >= 0");
  EXPECT_EQ(r.first_violation->at.spacing, 5.0);
  EXPECT_EQ(r.first_violation->at.relative_speed, -5.0);
  EXPECT_EQ(r.first_violation->at.speed, 0.0);
}

TEST(Ovrv, ValidateRejectsNonPositiveGains) {
  OvrvParams p = kOvrvDefault;
  p.tau = 0;
  EXPECT_THROW(validate(p), DomainError);
  p = kOvrvDefault;
  p.k2 = -1;
  EXPECT_THROW(validate(p), DomainError);
}
