#include "dpsi/constitutive.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace dpsi {
namespace {

using testing::fd_gradient;
using testing::random_deformation;
using testing::random_matrix;
using testing::random_rotation;
using testing::rel_err;

TEST(Lame, ZeroPoissonGivesZeroLambda) {
  const LameParams l = lame_from_moduli(1e5, 0.0);
  EXPECT_DOUBLE_EQ(l.mu, 5e4);
  EXPECT_DOUBLE_EQ(l.lambda, 0.0);
}

TEST(Lame, NearlyIncompressible) {
  // Evaluated with a desk calculator: 1e7/2.96 and 4.8e6/0.0592.
  const LameParams l = lame_from_moduli(1e7, 0.48);
  EXPECT_NEAR(l.mu, 3378378.378378378, 1e-6);
  EXPECT_NEAR(l.lambda, 81081081.08108102, 1e-5);
}

TEST(Lame, TableBoxCornersAreFinitePositive) {
  for (double E : {1e7, 3e8})
    for (double nu : {0.01, 0.48}) {
      const LameParams l = lame_from_moduli(E, nu);
      EXPECT_TRUE(std::isfinite(l.mu) && l.mu > 0.0);
      EXPECT_TRUE(std::isfinite(l.lambda) && l.lambda > 0.0);
    }
}

TEST(Lame, RejectsInvalidModuli) {
  EXPECT_THROW(lame_from_moduli(1e7, 0.5), DomainError);
  EXPECT_THROW(lame_from_moduli(1e7, 0.7), DomainError);
  EXPECT_THROW(lame_from_moduli(0.0, 0.3), DomainError);
  EXPECT_THROW(lame_from_moduli(-1.0, 0.3), DomainError);
}

TEST(Lame, ChainRuleMatchesFiniteDifferences) {
  const double E = 5e7, nu = 0.27, mb = 0.7, lb = -1.3;
  auto phi = [&](double e, double n) {
    const LameParams l = lame_from_moduli(e, n);
    return mb * l.mu + lb * l.lambda;
  };
  const auto [Eb, nub] = lame_vjp(E, nu, mb, lb);
  const double hE = 1e2, hn = 1e-7;
  EXPECT_NEAR(Eb, (phi(E + hE, nu) - phi(E - hE, nu)) / (2 * hE), 1e-7 * std::abs(Eb));
  EXPECT_NEAR(nub, (phi(E, nu + hn) - phi(E, nu - hn)) / (2 * hn), 1e-6 * std::abs(nub));
}

TEST(Svd, ProperRotationsAndReconstruction) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const Mat3 F = random_deformation(rng, 0.3, 3.0);
    const Svd3 s = signed_svd(F);
    EXPECT_NEAR(s.U.determinant(), 1.0, 1e-12);
    EXPECT_NEAR(s.V.determinant(), 1.0, 1e-12);
    EXPECT_LT(rel_err(s.reconstruct(), F), 1e-10);
  }
}

TEST(Polar, IdentityRotationAndSpd) {
  const auto id = polar_rotation(Mat3::Identity());
  EXPECT_LT((id.R - Mat3::Identity()).norm(), 1e-12);
  EXPECT_LT((id.S - Mat3::Identity()).norm(), 1e-12);

  std::mt19937_64 rng(3);
  const Mat3 Q = random_rotation(rng);
  const auto rot = polar_rotation(Q);
  EXPECT_LT((rot.R - Q).norm(), 1e-9);
  EXPECT_LT((rot.S - Mat3::Identity()).norm(), 1e-9);

  const Mat3 D = Vec3(2.0, 1.0, 0.5).asDiagonal();
  const auto spd = polar_rotation(D);
  EXPECT_LT((spd.R - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT((spd.S - D).norm(), 1e-9);
}

TEST(Polar, Properties) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const Mat3 F = random_deformation(rng, 0.2, 4.0);
    const auto p = polar_rotation(F);
    EXPECT_LT((p.R * p.R.transpose() - Mat3::Identity()).norm(), 1e-9);
    EXPECT_NEAR(p.R.determinant(), 1.0, 1e-9);
    EXPECT_LT((p.R * p.S - F).norm(), 1e-9);
    EXPECT_LT((p.S - p.S.transpose()).norm(), 1e-9);
  }
}

TEST(Polar, RejectsSingular) {
  const Mat3 F = Vec3(1.0, 1.0, 1e-14).asDiagonal();
  EXPECT_THROW(polar_rotation(F), DegenerateError);
}

TEST(Stress, ZeroAtIdentity) {
  const LameParams l = lame_from_moduli(1e7, 0.3);
  EXPECT_EQ(fixed_corotated_stress(Mat3::Identity(), l).norm(), 0.0);
}

TEST(Stress, UniformStretchWithoutLambda) {
  const LameParams l{2.5e6, 0.0};
  const double s = 1.1;
  const Mat3 tau = fixed_corotated_stress(s * Mat3::Identity(), l);
  const Mat3 expected = 2.0 * l.mu * (s - 1.0) * s * Mat3::Identity();
  EXPECT_LT((tau - expected).norm(), 1e-9 * expected.norm());
}

TEST(Stress, MatchesEnergyGradient) {
  // Oracle: central differences of the energy density, P = dPsi/dF, then
  // Kirchhoff = P F^T. 100 random F with det in [0.5, 2].
  std::mt19937_64 rng(2024);
  const LameParams l = lame_from_moduli(3e7, 0.35);
  for (int t = 0; t < 100; ++t) {
    const Mat3 F = random_deformation(rng);
    const Mat3 P = fd_gradient([&](const Mat3& X) { return fixed_corotated_energy(X, l); }, F,
                               1e-6);
    const Mat3 tau = fixed_corotated_stress(F, l);
    EXPECT_LT(rel_err(tau, P * F.transpose()), 1e-5) << "trial " << t;
  }
}

TEST(Stress, EnergyIsRotationInvariant) {
  std::mt19937_64 rng(5);
  const LameParams l = lame_from_moduli(2e7, 0.2);
  for (int t = 0; t < 50; ++t) {
    const Mat3 F = random_deformation(rng);
    const Mat3 Q = random_rotation(rng);
    const double a = fixed_corotated_energy(F, l);
    const double b = fixed_corotated_energy(Q * F, l);
    EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, std::abs(a)));
  }
}

TEST(ReturnMap, HugeYieldStressIsElastic) {
  std::mt19937_64 rng(9);
  const LameParams l = lame_from_moduli(1e7, 0.3);
  for (int t = 0; t < 20; ++t) {
    const Mat3 F = random_deformation(rng);
    const auto r = von_mises_return_map(F, 1e12, l);
    EXPECT_FALSE(r.proj.yielded);
    EXPECT_EQ(r.F_elastic, F);
  }
}

TEST(ReturnMap, IdentityIsInsideYieldSurface) {
  const LameParams l = lame_from_moduli(1e7, 0.3);
  const auto r = von_mises_return_map(Mat3::Identity(), 1e6, l);
  EXPECT_LE(r.proj.delta_gamma, 0.0);
  EXPECT_FALSE(r.proj.yielded);
  EXPECT_EQ(r.F_elastic, Mat3::Identity());
}

TEST(ReturnMap, ClosedFormShear) {
  // F = diag(e^a, e^-a, 1): Hencky (a, -a, 0), ||s|| = a sqrt 2. With
  // E = 1e7, nu = 0.3, sigma_y = 1e6: sigma_y/(2 mu) = 0.13 < 0.2828.
  const LameParams l = lame_from_moduli(1e7, 0.3);
  const double a = 0.2;
  const Mat3 F = Vec3(std::exp(a), std::exp(-a), 1.0).asDiagonal();
  const auto r = von_mises_return_map(F, 1e6, l);
  ASSERT_TRUE(r.proj.yielded);
  EXPECT_NEAR(r.proj.delta_gamma, 0.28284271247461906 - 0.13, 1e-12);
  const Vec3 eps = r.svd_elastic.sigma.array().log().matrix();
  const Vec3 dev = eps.array() - eps.sum() / 3.0;
  EXPECT_NEAR(dev.norm(), 0.13, 1e-8);
  // The projection keeps the volumetric strain, so e^(+-0.13/sqrt2) survives.
  const Mat3 expected = Vec3(std::exp(0.13 / std::sqrt(2.0)), std::exp(-0.13 / std::sqrt(2.0)), 1.0)
                            .asDiagonal();
  EXPECT_LT((r.F_elastic - expected).norm(), 1e-10);
}

TEST(ReturnMap, ProjectionProperties) {
  std::mt19937_64 rng(77);
  const LameParams l = lame_from_moduli(2e7, 0.3);
  const double sigma_y = 5e5;
  const double k = sigma_y / (2.0 * l.mu);
  int yielded = 0;
  for (int t = 0; t < 200; ++t) {
    const Mat3 F = random_deformation(rng, 0.85, 1.2);
    const auto r = von_mises_return_map(F, sigma_y, l);
    // Deviatoric direction is orthogonal to (1,1,1).
    EXPECT_NEAR(r.proj.deviatoric.sum(), 0.0, 1e-10);
    EXPECT_EQ(r.proj.yielded, r.proj.delta_gamma > 0.0);
    if (!r.proj.yielded) continue;
    ++yielded;
    EXPECT_NEAR(r.F_elastic.determinant(), F.determinant(), 1e-8 * F.determinant());
    const Vec3 eps = r.svd_elastic.sigma.array().log().matrix();
    EXPECT_NEAR((eps.array() - eps.sum() / 3.0).matrix().norm(), k, 1e-8);
    const auto again = von_mises_return_map(r.F_elastic, sigma_y, l);
    EXPECT_LE(again.proj.delta_gamma, 1e-9);
    EXPECT_LT((again.F_elastic - r.F_elastic).norm(), 1e-9);
  }
  EXPECT_GT(yielded, 50);
}

// --- reverse mode -----------------------------------------------------------

TEST(Vjp, PolarRotation) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 30; ++t) {
    const Mat3 F = random_deformation(rng, 0.5, 2.0);
    const Mat3 G = random_matrix(rng);
    const Mat3 fd = fd_gradient(
        [&](const Mat3& X) { return G.cwiseProduct(polar_rotation(X).R).sum(); }, F);
    EXPECT_LT(rel_err(polar_rotation_vjp(signed_svd(F), G), fd), 1e-7);
  }
  // Repeated singular values are well defined for the rotation.
  const Mat3 G = random_matrix(rng);
  const Mat3 fd = fd_gradient(
      [&](const Mat3& X) { return G.cwiseProduct(polar_rotation(X).R).sum(); },
      Mat3::Identity());
  EXPECT_LT(rel_err(polar_rotation_vjp(signed_svd(Mat3::Identity()), G), fd), 1e-7);
}

TEST(Vjp, Stress) {
  std::mt19937_64 rng(41);
  const double E = 4e7, nu = 0.33;
  for (int t = 0; t < 30; ++t) {
    const Mat3 F = t == 0 ? Mat3::Identity() : random_deformation(rng);
    const Mat3 G = random_matrix(rng);
    const LameParams l = lame_from_moduli(E, nu);
    const auto v = fixed_corotated_stress_vjp(F, signed_svd(F), l, G);
    const Mat3 fd = fd_gradient(
        [&](const Mat3& X) { return G.cwiseProduct(fixed_corotated_stress(X, l)).sum(); }, F);
    EXPECT_LT(rel_err(v.F_bar, fd), 1e-6) << t;
    const double hm = 1.0;
    const double dmu = (G.cwiseProduct(fixed_corotated_stress(F, {l.mu + hm, l.lambda})).sum() -
                        G.cwiseProduct(fixed_corotated_stress(F, {l.mu - hm, l.lambda})).sum()) /
                       (2 * hm);
    const double dla = (G.cwiseProduct(fixed_corotated_stress(F, {l.mu, l.lambda + hm})).sum() -
                        G.cwiseProduct(fixed_corotated_stress(F, {l.mu, l.lambda - hm})).sum()) /
                       (2 * hm);
    EXPECT_NEAR(v.mu_bar, dmu, 1e-6 * std::max(1.0, std::abs(dmu)));
    EXPECT_NEAR(v.lambda_bar, dla, 1e-6 * std::max(1.0, std::abs(dla)));
  }
}

double return_map_objective(const Mat3& G, const Mat3& F, double sigma_y, const LameParams& l) {
  return G.cwiseProduct(von_mises_return_map(F, sigma_y, l).F_elastic).sum();
}

TEST(Vjp, ReturnMapYieldedGeneric) {
  std::mt19937_64 rng(53);
  const LameParams l = lame_from_moduli(2e7, 0.3);
  const double sigma_y = 4e5;
  int checked = 0;
  for (int t = 0; t < 60 && checked < 25; ++t) {
    const Mat3 F = random_deformation(rng, 0.85, 1.2);
    const auto fwd = von_mises_return_map(F, sigma_y, l);
    if (!fwd.proj.yielded) continue;
    ++checked;
    const Mat3 G = random_matrix(rng);
    const auto v = von_mises_return_map_vjp(fwd, sigma_y, l, G);
    const Mat3 fd = fd_gradient([&](const Mat3& X) { return return_map_objective(G, X, sigma_y, l); },
                                F);
    EXPECT_LT(rel_err(v.F_trial_bar, fd), 1e-6);
    const double hs = 1.0;
    const double dsy = (return_map_objective(G, F, sigma_y + hs, l) -
                        return_map_objective(G, F, sigma_y - hs, l)) /
                       (2 * hs);
    EXPECT_NEAR(v.sigma_y_bar, dsy, 1e-6 * std::max(1e-9, std::abs(dsy)));
    const double hm = 10.0;
    const double dmu = (return_map_objective(G, F, sigma_y, {l.mu + hm, l.lambda}) -
                        return_map_objective(G, F, sigma_y, {l.mu - hm, l.lambda})) /
                       (2 * hm);
    EXPECT_NEAR(v.mu_bar, dmu, 1e-6 * std::max(1e-12, std::abs(dmu)));
  }
  EXPECT_GE(checked, 10);
}

TEST(Vjp, ReturnMapRepeatedSingularValues) {
  // Uniaxial compression from rest: two equal singular values.
  std::mt19937_64 rng(59);
  const LameParams l = lame_from_moduli(2e7, 0.3);
  const double sigma_y = 4e5;
  const Mat3 Q1 = random_rotation(rng), Q2 = random_rotation(rng);
  for (const Vec3& s : {Vec3(0.9, 1.0, 1.0), Vec3(1.1, 1.1, 0.95), Vec3(1.05, 1.05 + 1e-9, 0.9)}) {
    const Mat3 F = Q1 * s.asDiagonal() * Q2;
    const auto fwd = von_mises_return_map(F, sigma_y, l);
    ASSERT_TRUE(fwd.proj.yielded);
    const Mat3 G = random_matrix(rng);
    const auto v = von_mises_return_map_vjp(fwd, sigma_y, l, G);
    const Mat3 fd = fd_gradient(
        [&](const Mat3& X) { return return_map_objective(G, X, sigma_y, l); }, F, 1e-6);
    EXPECT_LT(rel_err(v.F_trial_bar, fd), 1e-6);
  }
}

TEST(Vjp, ReturnMapElasticBranchIsIdentity) {
  const LameParams l = lame_from_moduli(2e7, 0.3);
  const Mat3 F = Vec3(1.001, 0.999, 1.0).asDiagonal();
  const auto fwd = von_mises_return_map(F, 1e7, l);
  ASSERT_FALSE(fwd.proj.yielded);
  std::mt19937_64 rng(1);
  const Mat3 G = random_matrix(rng);
  const auto v = von_mises_return_map_vjp(fwd, 1e7, l, G);
  EXPECT_EQ(v.F_trial_bar, G);
  EXPECT_EQ(v.sigma_y_bar, 0.0);
  EXPECT_EQ(v.mu_bar, 0.0);
}

}  // namespace
}  // namespace dpsi
