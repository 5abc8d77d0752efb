#pragma once

#include "model.hpp"

#include <optional>

namespace blpnp {

struct InversionSettings {
  double tol_delta = 1e-12;
  int max_iter_contraction = 5000;
  int max_iter_newton = 100;
  double cond_limit = 1e12;

  void validate() const;
};

enum class InversionMethod { Contraction, Newton };

/// ln s(delta) and its Jacobian around a point, for one market.
struct LinearizedShares {
  Matrix probs;     // N x J inside probabilities
  Vector totals;    // column sums of probs, N times the predicted shares
  Vector residual;  // ln s - ln s(delta)
  Matrix cross;     // probs' probs
  Matrix jacobian;  // d ln s / d delta'
  Eigen::PartialPivLU<Matrix> lu;
  double rcond = 0.0;
};

/// mu is the N x J matrix of taste shifts (see taste_shifts).
LinearizedShares linearize_shares(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const Matrix& mu,
                                  Index market);

/// Residual ln s - ln s(delta) only.
Vector log_share_residual(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const Matrix& mu, Index market);

/// Berry's map: delta + ln s - ln s(delta).
Vector contraction_step(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const MarketView& m,
                        const RandomCoefs& rc);

struct NewtonStep {
  Vector delta;
  bool fell_back = false;  // Jacobian too ill-conditioned; a contraction step was taken instead
  double rcond = 0.0;
};

/// delta + [d ln s/d delta']^{-1} (ln s - ln s(delta)), solved by LU with partial pivoting.
NewtonStep newton_kantorovich_step(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const MarketView& m,
                                   const RandomCoefs& rc, double cond_limit = 1e12);

/// Same step from an existing linearization. Returns false if the condition
/// estimate exceeds cond_limit (step left untouched).
bool newton_direction(const LinearizedShares& lin, double cond_limit, Vector& step);

struct DeltaSolve {
  Vector delta;
  int iterations = 0;
  double residual = 0.0;  // max_j |ln s_j - ln s_j(delta)|
  int fallbacks = 0;
};

/// Full inversion of one market. Starts from `start` or the logit inversion
/// ln s_j - ln s_0. Throws ConvergenceError when max_iter is exhausted.
DeltaSolve solve_delta(const VectorCRef& log_shares_t, const MarketView& m, const RandomCoefs& rc,
                       const InversionSettings& settings, InversionMethod method = InversionMethod::Newton,
                       const std::optional<Vector>& start = std::nullopt);

/// ln s_j - ln s_0 for one market.
Vector logit_delta(const VectorCRef& log_shares_t);

}  // namespace blpnp
