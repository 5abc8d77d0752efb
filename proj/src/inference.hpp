#pragma once

#include "estimators.hpp"

namespace blpnp {

/// Which matrix plays Omega_tt in the variance formula.
///  Sandwich: bread H + Omega_tl Lambda, meat E[g g']; v_gmm = H^{-1} M H^{-1}.
///  OuterProduct: Omega_tt = E[g g'] in both places; v_gmm = Omega_tt^{-1}.
///  Hessian: Omega_tt = H, the Jacobian of the average score; v_gmm = H^{-1}.
enum class OmegaKind { Sandwich, OuterProduct, Hessian };

const char* omega_kind_name(OmegaKind k);
OmegaKind parse_omega_kind(const std::string& name);

struct VarianceOptions {
  OmegaKind kind = OmegaKind::Sandwich;
  bool zero_lambda_jacobian = false;  // diagnostic: Lambda_theta = 0
  bool zero_omega_tl = false;         // diagnostic: Omega_tl = 0
  double fd_step = 1e-5;              // relative step for the score Jacobian
};

struct VarianceReport {
  OmegaKind kind = OmegaKind::Sandwich;
  Matrix v_np;
  Matrix v_gmm;
  Matrix omega_tt;              // the matrix used as Omega_tt
  Matrix meat;                  // (1/JT) sum g g'
  Matrix hessian;               // d/dtheta' of the average score at fixed lambda
  Matrix omega_tl_times_Lambda; // d/dlambda' of the average score times Lambda_theta
  Vector se_np;
  Vector se_gmm;
  double gradient_identity_error = 0.0;  // |(1/JT) sum z* xi - grad Q|_inf
};

/// z*_jt, one row per observation (T*J x dim theta), such that
/// grad_theta Q(lambda_hat, theta_hat) = (1/JT) sum_jt z*_jt xi_jt.
Matrix effective_instruments(const FitResult& fit, const GmmProblem& problem);

/// Residuals xi_jt(lambda_hat, theta_hat) stacked market-major.
Vector pseudo_residuals(const FitResult& fit, const GmmProblem& problem);

/// d lambda*(theta) / d theta', (N*T) x dim theta. Beta columns are zero.
Matrix lambda_jacobian(const FitResult& fit, const GmmProblem& problem);

VarianceReport npgmm_variance(const FitResult& fit, const GmmProblem& problem, const VarianceOptions& options = {});

}  // namespace blpnp
