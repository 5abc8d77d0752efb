#pragma once

#include "types.hpp"

namespace blpnp {

using VectorCRef = Eigen::Ref<const Vector>;

/// Consumer taste deviations b_ik = sigma_k nu_ik + d_i' pi_k, N x K.
Matrix consumer_coefficients(const MarketView& m, const RandomCoefs& rc);

/// mu_ij = sum_k x_jk b_ik, N x J.
Matrix taste_shifts(const MarketView& m, const RandomCoefs& rc);

/// Inside-good probabilities (N x J) and outside probabilities (N) for one market.
struct ChoiceProbs {
  Matrix inside;
  Vector outside;
};

ChoiceProbs choice_probs(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc);
ChoiceProbs choice_probs_from_shifts(const VectorCRef& delta_t, const Matrix& mu, Index market);

/// Row i holds (p_i0, p_i1, ..., p_iJ).
Matrix individual_choice_probs(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc);

/// Simulated market shares: column means of the inside probabilities.
Vector predict_shares(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc);

/// lambda_it, the outside-option probability of each consumer.
Vector outside_probs(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc);

/// h(lambda_t, x_jt, sigma) = ln( (1/N) sum_i lambda_i exp(mu_ij) ) for a single product
/// with characteristics x_jt (length K).
double h_function(const VectorCRef& lambda_t, const VectorCRef& x_jt, const MarketView& m, const RandomCoefs& rc);

/// h for every product of the market.
Vector h_values(const VectorCRef& lambda_t, const MarketView& m, const RandomCoefs& rc);

/// delta_jt = ln s_jt - h(lambda_t, x_jt, sigma). Products are independent of each other.
Vector closed_form_delta(const VectorCRef& shares_t, const VectorCRef& lambda_t, const MarketView& m,
                         const RandomCoefs& rc);

/// d ln s_j / d delta_l for the simulated shares, J x J.
Matrix share_log_jacobian(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc);

/// Derivatives of the closed-form inversion with respect to the packed random
/// coefficients (sigma, then pi row-major) at fixed lambda, J x (K + K*R).
Matrix delta_param_gradients(const VectorCRef& lambda_t, const MarketView& m, const RandomCoefs& rc);

/// Normalized weights lambda_i exp(mu_ij) / sum_i' lambda_i' exp(mu_i'j), N x J.
/// Each column sums to one.
Matrix inversion_weights(const VectorCRef& lambda_t, const MarketView& m, const RandomCoefs& rc);

/// Closed-form inversion for one market from log shares, optionally with its
/// parameter gradient. This is the NP-GMM hot path.
struct ClosedFormInversion {
  Vector delta;
  Matrix gradient;  // empty unless requested
};

ClosedFormInversion closed_form_inversion(const VectorCRef& log_shares_t, const VectorCRef& lambda_t,
                                          const MarketView& m, const RandomCoefs& rc, bool with_gradient);

}  // namespace blpnp
