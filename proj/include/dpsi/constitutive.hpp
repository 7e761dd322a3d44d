#pragma once

// Fixed-corotated elasticity with von Mises plasticity on Hencky strain.
//
// Everything here is a pure function of its arguments. The *_vjp functions are
// the reverse-mode counterparts used by the adjoint pass; they take the
// forward intermediates (SVD, projection) so nothing has to be recomputed.

#include "dpsi/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace dpsi {

struct LameParams {
  double mu = 0.0;
  double lambda = 0.0;
};

/// mu = E / (2(1+nu)), lambda = E nu / ((1+nu)(1-2nu)). SI units.
inline LameParams lame_from_moduli(double E, double nu) {
  if (!(E > 0.0) || !std::isfinite(E)) throw DomainError("lame_from_moduli: E must be > 0");
  if (!(nu >= 0.0) || !(nu < 0.5)) throw DomainError("lame_from_moduli: nu must be in [0, 0.5)");
  return {E / (2.0 * (1.0 + nu)), E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))};
}

/// Chain rule of lame_from_moduli: (mu_bar, lambda_bar) -> (E_bar, nu_bar).
inline std::pair<double, double> lame_vjp(double E, double nu, double mu_bar, double lambda_bar) {
  const double a = 1.0 + nu;
  const double g = a * (1.0 - 2.0 * nu);
  const double dmu_dE = 1.0 / (2.0 * a);
  const double dmu_dnu = -E / (2.0 * a * a);
  const double dla_dE = nu / g;
  const double dla_dnu = E * (1.0 + 2.0 * nu * nu) / (g * g);
  return {mu_bar * dmu_dE + lambda_bar * dla_dE, mu_bar * dmu_dnu + lambda_bar * dla_dnu};
}

/// F = U diag(sigma) V^T with det(U) = det(V) = +1. sigma(2) carries the sign
/// of det(F), so it is negative for inverted inputs.
struct Svd3 {
  Mat3 U = Mat3::Identity();
  Vec3 sigma = Vec3::Ones();
  Mat3 V = Mat3::Identity();

  Mat3 reconstruct() const { return U * sigma.asDiagonal() * V.transpose(); }
};

inline Svd3 signed_svd(const Mat3& F) {
  if (!F.allFinite()) throw NumericalError("signed_svd: non-finite input");
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Svd3 out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  if (out.U.determinant() < 0.0) {
    out.U.col(2) *= -1.0;
    out.sigma(2) *= -1.0;
  }
  if (out.V.determinant() < 0.0) {
    out.V.col(2) *= -1.0;
    out.sigma(2) *= -1.0;
  }
  if (!out.U.allFinite() || !out.V.allFinite() || !out.sigma.allFinite())
    throw NumericalError("signed_svd: decomposition did not converge");
  return out;
}

struct PolarDecomposition {
  Mat3 R;
  Mat3 S;
};

inline PolarDecomposition polar_rotation(const Svd3& svd) {
  if (svd.sigma.minCoeff() < 1e-12)
    throw DegenerateError("polar_rotation: singular value below 1e-12");
  return {svd.U * svd.V.transpose(), svd.V * svd.sigma.asDiagonal() * svd.V.transpose()};
}

inline PolarDecomposition polar_rotation(const Mat3& F) { return polar_rotation(signed_svd(F)); }

/// Psi(F) = mu ||F - R||_F^2 + lambda/2 (J - 1)^2.
inline double fixed_corotated_energy(const Mat3& F, const LameParams& lame) {
  const Svd3 svd = signed_svd(F);
  const double J = svd.sigma.prod();
  return lame.mu * (svd.sigma.array() - 1.0).square().sum() + 0.5 * lame.lambda * sqr(J - 1.0);
}

/// Kirchhoff stress tau = P F^T = 2 mu (F - R) F^T + lambda (J - 1) J I.
inline Mat3 fixed_corotated_stress(const Mat3& F, const Svd3& svd, const LameParams& lame) {
  const Mat3 R = svd.U * svd.V.transpose();
  const double J = svd.sigma.prod();
  return 2.0 * lame.mu * (F - R) * F.transpose() +
         lame.lambda * (J - 1.0) * J * Mat3::Identity();
}

inline Mat3 fixed_corotated_stress(const Mat3& F, const LameParams& lame) {
  const Svd3 svd = signed_svd(F);
  if (svd.sigma(2) <= 0.0) throw DomainError("fixed_corotated_stress: det(F) must be > 0");
  return fixed_corotated_stress(F, svd, lame);
}

struct PlasticProjection {
  Vec3 hencky_trial = Vec3::Zero();
  Vec3 deviatoric = Vec3::Zero();
  double delta_gamma = 0.0;
  bool yielded = false;
  bool degenerate = false;
};

struct ReturnMapResult {
  Mat3 F_elastic;
  Svd3 svd_elastic;  // shares U, V with the trial decomposition
  Vec3 sigma_trial;
  PlasticProjection proj;
};

/// Von Mises return mapping on the eigenvalues of the trial Hencky strain.
/// delta_gamma = ||s|| - sigma_y / (2 mu); the projection keeps tr(eps).
inline ReturnMapResult von_mises_return_map(const Mat3& F_trial, const Svd3& trial,
                                            double sigma_y, const LameParams& lame) {
  if (!(trial.sigma(2) > 0.0)) throw DomainError("von_mises_return_map: det(F_trial) must be > 0");
  ReturnMapResult out{F_trial, trial, trial.sigma, {}};
  PlasticProjection& p = out.proj;
  p.hencky_trial = trial.sigma.array().log().matrix();
  const double mean = p.hencky_trial.sum() / 3.0;
  p.deviatoric = p.hencky_trial.array() - mean;
  const double norm_s = p.deviatoric.norm();
  p.delta_gamma = norm_s - sigma_y / (2.0 * lame.mu);
  if (p.delta_gamma <= 0.0) return out;
  if (norm_s < 1e-12) {
    p.degenerate = true;
    return out;
  }
  p.yielded = true;
  const Vec3 eps = p.hencky_trial - p.delta_gamma / norm_s * p.deviatoric;
  out.svd_elastic.sigma = eps.array().exp().matrix();
  out.F_elastic = out.svd_elastic.reconstruct();
  return out;
}

inline ReturnMapResult von_mises_return_map(const Mat3& F_trial, double sigma_y,
                                            const LameParams& lame) {
  if (!(sigma_y > 0.0)) throw DomainError("von_mises_return_map: sigma_y must be > 0");
  return von_mises_return_map(F_trial, signed_svd(F_trial), sigma_y, lame);
}

// ---------------------------------------------------------------------------
// Reverse mode.
//
// For X = U diag(f(sigma)) V^T with K = U^T dF V, the off-diagonal pair (i, j)
// of dX in the (U, V) frame is driven by
//   sym  part: (f_j - f_i) / (sigma_j - sigma_i)
//   skew part: (f_i + f_j) / (sigma_i + sigma_j)
// and the diagonal by the Jacobian of f. The helpers below apply the transpose.

namespace detail {

/// Pulls G (adjoint of X, world frame) back to dF given the per-pair
/// coefficients and the diagonal Jacobian jac(i, j) = d f_i / d sigma_j.
inline Mat3 spectral_pullback(const Svd3& svd, const Mat3& G, const Mat3& jac,
                              const Mat3& sym_coef, const Mat3& skew_coef) {
  const Mat3 Gh = svd.U.transpose() * G * svd.V;
  Mat3 Kb = Mat3::Zero();
  for (int j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) acc += Gh(i, i) * jac(i, j);
    Kb(j, j) = acc;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const double sym = 0.5 * sym_coef(i, j) * (Gh(i, j) + Gh(j, i));
      const double skew = 0.5 * skew_coef(i, j) * (Gh(i, j) - Gh(j, i));
      Kb(i, j) = sym + skew;
      Kb(j, i) = sym - skew;
    }
  }
  return svd.U * Kb * svd.V.transpose();
}

}  // namespace detail

/// Adjoint of R = polar rotation of F.
inline Mat3 polar_rotation_vjp(const Svd3& svd, const Mat3& R_bar) {
  Mat3 skew = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) skew(i, j) = 2.0 / (svd.sigma(i) + svd.sigma(j));
  return detail::spectral_pullback(svd, R_bar, Mat3::Zero(), Mat3::Zero(), skew);
}

struct StressVjp {
  Mat3 F_bar = Mat3::Zero();
  double mu_bar = 0.0;
  double lambda_bar = 0.0;
};

inline StressVjp fixed_corotated_stress_vjp(const Mat3& F, const Svd3& svd, const LameParams& lame,
                                            const Mat3& tau_bar) {
  StressVjp out;
  const Mat3 R = svd.U * svd.V.transpose();
  const Mat3 A = F - R;
  const double J = svd.sigma.prod();
  const double tr = tau_bar.trace();
  const Mat3 tauF = tau_bar * F;
  out.mu_bar = 2.0 * (tau_bar.cwiseProduct(A * F.transpose())).sum();
  out.lambda_bar = tr * (J - 1.0) * J;
  out.F_bar = 2.0 * lame.mu * (tauF + tau_bar.transpose() * A);
  out.F_bar += polar_rotation_vjp(svd, -2.0 * lame.mu * tauF);
  const Vec3 cof_sigma(svd.sigma(1) * svd.sigma(2), svd.sigma(0) * svd.sigma(2),
                       svd.sigma(0) * svd.sigma(1));
  const Mat3 cof = svd.U * cof_sigma.asDiagonal() * svd.V.transpose();
  out.F_bar += lame.lambda * (2.0 * J - 1.0) * tr * cof;
  return out;
}

struct ReturnMapVjp {
  Mat3 F_trial_bar = Mat3::Zero();
  double sigma_y_bar = 0.0;
  double mu_bar = 0.0;
};

/// Adjoint of von_mises_return_map with the forward branch frozen.
inline ReturnMapVjp von_mises_return_map_vjp(const ReturnMapResult& fwd, double sigma_y,
                                             const LameParams& lame, const Mat3& F_bar) {
  ReturnMapVjp out;
  if (!fwd.proj.yielded) {
    out.F_trial_bar = F_bar;
    return out;
  }
  const Vec3& sig = fwd.sigma_trial;
  const Vec3& f = fwd.svd_elastic.sigma;
  const Vec3& s = fwd.proj.deviatoric;
  const double ns = s.norm();
  const Vec3 sh = s / ns;
  const double k = sigma_y / (2.0 * lame.mu);

  Mat3 jac;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double P = (i == j ? 2.0 / 3.0 : -1.0 / 3.0) - sh(i) * sh(j);
      jac(i, j) = f(i) * (1.0 / 3.0 + k * P / ns) / sig(j);
    }
  Mat3 sym = Mat3::Zero(), skew = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double d = sig(j) - sig(i);
      sym(i, j) = d == 0.0 ? f(i) * k / (ns * sig(i))
                           : f(i) * std::expm1(k * std::log1p(d / sig(i)) / ns) / d;
      skew(i, j) = (f(i) + f(j)) / (sig(i) + sig(j));
    }
  // Pull back through the trial decomposition; U, V are shared.
  Svd3 trial = fwd.svd_elastic;
  trial.sigma = sig;
  out.F_trial_bar = detail::spectral_pullback(trial, F_bar, jac, sym, skew);

  const Mat3 Gh = trial.U.transpose() * F_bar * trial.V;
  double k_bar = 0.0;
  for (int i = 0; i < 3; ++i) k_bar += Gh(i, i) * f(i) * sh(i);
  out.sigma_y_bar = k_bar / (2.0 * lame.mu);
  out.mu_bar = -k_bar * sigma_y / (2.0 * lame.mu * lame.mu);
  return out;
}

}  // namespace dpsi
