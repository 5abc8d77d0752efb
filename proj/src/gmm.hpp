#pragma once

#include "dataset.hpp"
#include "inversion.hpp"
#include "optimizer.hpp"

namespace blpnp {

enum class WeightKind { TwoStage, Identity };

struct WeightMatrix {
  Matrix w;  // q x q, symmetric positive definite
};

/// TwoStage: ((1/JT) Z'Z)^{-1}. Identity: I_q.
WeightMatrix build_weight_matrix(const MarketDataset& data, WeightKind kind);

/// Linear pieces shared by every criterion evaluation on one dataset: the
/// weight matrix, Z'X and the beta concentration map. Moments use 1/(JT) scaling.
class GmmProblem {
 public:
  GmmProblem(const MarketDataset& data, WeightMatrix w, int threads = 1);

  const MarketDataset& data() const { return *data_; }
  const Matrix& weight() const { return w_; }
  const Matrix& ztx() const { return ztx_; }
  /// (X'ZWZ'X)^{-1} X'ZW, K x q; beta = beta_map * Z'delta.
  const Matrix& beta_map() const { return beta_map_; }
  /// I - Z'X beta_map; Z'xi = projector * Z'delta at the concentrated beta.
  const Matrix& projector() const { return projector_; }
  double scale() const { return scale_; }
  int threads() const { return threads_; }
  void set_threads(int t) { threads_ = t < 1 ? 1 : t; }

 private:
  const MarketDataset* data_;
  Matrix w_, ztx_, beta_map_, projector_;
  double scale_;
  int threads_;
};

/// beta = (X'ZWZ'X)^{-1} X'ZWZ' delta.
Vector linear_iv_gmm_beta(const Vector& delta, const GmmProblem& problem);
Vector linear_iv_gmm_beta(const Vector& delta, const MarketDataset& data, const WeightMatrix& w);

/// m = (1/JT) sum_jt z_jt xi_jt.
Vector sample_moments(const Vector& xi, const MarketDataset& data);

/// One criterion evaluation with beta concentrated out. `gradient` is with
/// respect to the packed random coefficients and is empty unless requested.
struct CriterionEval {
  double value = 0.0;
  Vector gradient;
  Vector beta;
};

/// Full GMM criterion: solves the inversion in every market at sigma.
/// `delta_out`, when given, receives the solved mean utilities.
double criterion_G(const GmmProblem& problem, const ModelParameters& theta, const InversionSettings& settings,
                   Vector* delta_out = nullptr);

/// Concentrated G with its implicit-function gradient. `warm` holds the
/// starting mean utilities and is updated with the solution on success.
CriterionEval criterion_G_concentrated(const GmmProblem& problem, const RandomCoefs& rc,
                                       const InversionSettings& settings, Vector& warm, bool with_gradient,
                                       int* inner_iterations = nullptr);

/// Pseudo-GMM criterion at fixed outside probabilities lambda (T*N).
double criterion_Q(const GmmProblem& problem, const Vector& lambda, const ModelParameters& theta);
/// Gradient with respect to the full theta = (beta, sigma, pi).
Vector criterion_Q_gradient(const GmmProblem& problem, const Vector& lambda, const ModelParameters& theta);
CriterionEval criterion_Q_concentrated(const GmmProblem& problem, const Vector& lambda, const RandomCoefs& rc,
                                       bool with_gradient);

/// delta0 + J^{-1}(ln s - ln s(delta0, sigma)) in every market. Throws
/// NumericalError if a Jacobian is too ill-conditioned.
Vector ablp_map(const GmmProblem& problem, const Vector& delta0, const RandomCoefs& rc, double cond_limit = 1e12);

double criterion_Q_ablp(const GmmProblem& problem, const Vector& delta0, const ModelParameters& theta);
Vector criterion_Q_ablp_gradient(const GmmProblem& problem, const Vector& delta0, const ModelParameters& theta);
/// `fd_gradient` switches to forward differences of the map.
CriterionEval criterion_Q_ablp_concentrated(const GmmProblem& problem, const Vector& delta0, const RandomCoefs& rc,
                                            bool with_gradient, bool fd_gradient = false);

/// d ln s / d(sigma, pi) at fixed delta for one market, J x (K + K*R), from
/// inside probabilities and their column sums.
Matrix log_share_param_jacobian(const Matrix& probs, const Vector& totals, const MarketView& m);

enum class PseudoCriterion { Q, QAblp };

struct PseudoGmmResult {
  ModelParameters theta;
  OptimResult optim;
};

/// Minimizes Q at fixed lambda or Q^ablp at fixed delta0 over the random
/// coefficients, with beta concentrated out.
PseudoGmmResult minimize_pseudo_gmm(const GmmProblem& problem, PseudoCriterion kind, const Vector& anchor,
                                    const RandomCoefs& start, const OptimizerSettings& settings,
                                    bool ablp_fd_gradient = false);

}  // namespace blpnp
