#include "model.hpp"

#include <cmath>
#include <sstream>

namespace blpnp {

namespace {

void check_dims(const MarketView& m, const RandomCoefs& rc) {
  if (m.nu.cols() != m.x.cols() || rc.sigma.size() != m.x.cols() || rc.pi.rows() != m.x.cols() ||
      rc.pi.cols() != m.demo.cols() || m.demo.rows() != m.nu.rows())
    throw InputError("dimension mismatch between market data and random coefficients");
}

void check_lambda(const VectorCRef& lambda, Index n, Index market) {
  if (lambda.size() != n) throw InputError("lambda has wrong length");
  for (Index i = 0; i < n; ++i)
    if (!(lambda(i) > 0.0 && lambda(i) < 1.0)) {
      std::ostringstream os;
      os << "lambda out of (0,1) for consumer " << i << " in market " << market;
      throw InputError(os.str());
    }
}

[[noreturn]] void throw_non_finite(const Matrix& u, Index market) {
  for (Index j = 0; j < u.cols(); ++j)
    for (Index i = 0; i < u.rows(); ++i)
      if (!std::isfinite(u(i, j))) {
        std::ostringstream os;
        os << "non-finite utility for consumer " << i << ", product " << j << ", market " << market;
        throw NumericalError(os.str());
      }
  throw NumericalError("non-finite utility");
}

// Shifted weights w_ij = lambda_i exp(mu_ij) / exp(M_j) with M_j = max_i (ln lambda_i + mu_ij).
struct ShiftedWeights {
  Matrix w;      // N x J
  Vector shift;  // J
  Vector total;  // J, sum_i w_ij
};

ShiftedWeights shifted_weights(const VectorCRef& lambda_t, const Matrix& mu, Index market) {
  ShiftedWeights sw;
  Eigen::ArrayXXd a = mu.array().colwise() + lambda_t.array().log();
  sw.shift = a.colwise().maxCoeff().transpose();
  if (!sw.shift.allFinite()) throw_non_finite(a.matrix(), market);
  sw.w = (a.rowwise() - sw.shift.transpose().array()).exp().matrix();
  sw.total = sw.w.colwise().sum().transpose();
  const double n = static_cast<double>(mu.rows());
  for (Index j = 0; j < mu.cols(); ++j)
    if (!(sw.total(j) / n >= 1e-300)) {
      std::ostringstream os;
      os << "h average underflows for product " << j << " in market " << market;
      throw NumericalError(os.str());
    }
  return sw;
}

}  // namespace

Matrix consumer_coefficients(const MarketView& m, const RandomCoefs& rc) {
  check_dims(m, rc);
  Matrix b = m.nu * rc.sigma.asDiagonal();
  if (rc.pi.cols() > 0) b.noalias() += m.demo * rc.pi.transpose();
  return b;
}

Matrix taste_shifts(const MarketView& m, const RandomCoefs& rc) {
  const Matrix b = consumer_coefficients(m, rc);
  Matrix mu(m.nu.rows(), m.x.rows());
  mu.noalias() = b * m.x.transpose();
  return mu;
}

ChoiceProbs choice_probs_from_shifts(const VectorCRef& delta_t, const Matrix& mu, Index market) {
  if (delta_t.size() != mu.cols()) throw InputError("delta has wrong length for market");
  Eigen::ArrayXXd u = mu.array().rowwise() + delta_t.transpose().array();
  if (!u.allFinite()) throw_non_finite(u.matrix(), market);
  // per-consumer log-sum-exp stabilizer, never below the outside utility 0
  const Eigen::ArrayXd c = u.rowwise().maxCoeff().max(0.0);
  u.colwise() -= c;
  u = u.exp();
  const Eigen::ArrayXd outside = (-c).exp();
  const Eigen::ArrayXd denom = outside + u.rowwise().sum();
  ChoiceProbs p;
  p.inside = (u.colwise() / denom).matrix();
  p.outside = (outside / denom).matrix();
  return p;
}

ChoiceProbs choice_probs(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc) {
  return choice_probs_from_shifts(delta_t, taste_shifts(m, rc), m.market);
}

Matrix individual_choice_probs(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc) {
  const ChoiceProbs p = choice_probs(delta_t, m, rc);
  Matrix out(p.inside.rows(), p.inside.cols() + 1);
  out.col(0) = p.outside;
  out.rightCols(p.inside.cols()) = p.inside;
  return out;
}

Vector predict_shares(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc) {
  const ChoiceProbs p = choice_probs(delta_t, m, rc);
  return p.inside.colwise().mean().transpose();
}

Vector outside_probs(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc) {
  return choice_probs(delta_t, m, rc).outside;
}

double h_function(const VectorCRef& lambda_t, const VectorCRef& x_jt, const MarketView& m, const RandomCoefs& rc) {
  check_dims(m, rc);
  check_lambda(lambda_t, m.nu.rows(), m.market);
  if (x_jt.size() != m.x.cols()) throw InputError("x_jt has wrong length");
  return h_values(lambda_t, MarketView{x_jt.transpose(), m.nu, m.demo, m.market}, rc)(0);
}

Vector h_values(const VectorCRef& lambda_t, const MarketView& m, const RandomCoefs& rc) {
  check_lambda(lambda_t, m.nu.rows(), m.market);
  const ShiftedWeights sw = shifted_weights(lambda_t, taste_shifts(m, rc), m.market);
  const double n = static_cast<double>(m.nu.rows());
  return sw.shift.array() + (sw.total.array() / n).log();
}

ClosedFormInversion closed_form_inversion(const VectorCRef& log_shares_t, const VectorCRef& lambda_t,
                                          const MarketView& m, const RandomCoefs& rc, bool with_gradient) {
  check_lambda(lambda_t, m.nu.rows(), m.market);
  if (log_shares_t.size() != m.x.rows()) throw InputError("shares have wrong length for market");
  const ShiftedWeights sw = shifted_weights(lambda_t, taste_shifts(m, rc), m.market);
  const double n = static_cast<double>(m.nu.rows());
  ClosedFormInversion out;
  out.delta = log_shares_t.array() - sw.shift.array() - (sw.total.array() / n).log();
  if (!with_gradient) return out;

  const Index J = m.x.rows(), K = m.x.cols(), R = m.demo.cols();
  out.gradient.resize(J, K + K * R);
  const Eigen::ArrayXd inv_total = sw.total.array().inverse();
  // E_w[nu_k] and E_w[d_r] per product, weights w_ij / sum_i w_ij
  const Matrix nu_mean = (m.nu.transpose() * sw.w).array().rowwise() * inv_total.transpose();
  for (Index k = 0; k < K; ++k)
    out.gradient.col(k) = -(m.x.col(k).array() * nu_mean.row(k).transpose().array()).matrix();
  if (R > 0) {
    const Matrix d_mean = (m.demo.transpose() * sw.w).array().rowwise() * inv_total.transpose();
    for (Index k = 0; k < K; ++k)
      for (Index r = 0; r < R; ++r)
        out.gradient.col(K + k * R + r) = -(m.x.col(k).array() * d_mean.row(r).transpose().array()).matrix();
  }
  return out;
}

Matrix inversion_weights(const VectorCRef& lambda_t, const MarketView& m, const RandomCoefs& rc) {
  check_lambda(lambda_t, m.nu.rows(), m.market);
  const ShiftedWeights sw = shifted_weights(lambda_t, taste_shifts(m, rc), m.market);
  return sw.w * sw.total.cwiseInverse().asDiagonal();
}

Vector closed_form_delta(const VectorCRef& shares_t, const VectorCRef& lambda_t, const MarketView& m,
                         const RandomCoefs& rc) {
  const Vector log_s = shares_t.array().log();
  return closed_form_inversion(log_s, lambda_t, m, rc, false).delta;
}

Matrix delta_param_gradients(const VectorCRef& lambda_t, const MarketView& m, const RandomCoefs& rc) {
  const Vector zeros = Vector::Zero(m.x.rows());
  return closed_form_inversion(zeros, lambda_t, m, rc, true).gradient;
}

Matrix share_log_jacobian(const VectorCRef& delta_t, const MarketView& m, const RandomCoefs& rc) {
  const ChoiceProbs p = choice_probs(delta_t, m, rc);
  const Vector total = p.inside.colwise().sum().transpose();
  for (Index j = 0; j < total.size(); ++j)
    if (!(total(j) > 0.0)) {
      std::ostringstream os;
      os << "zero predicted share for product " << j << " in market " << m.market;
      throw NumericalError(os.str());
    }
  Matrix jac(total.size(), total.size());
  jac.noalias() = -(p.inside.transpose() * p.inside);
  jac = total.cwiseInverse().asDiagonal() * jac;
  jac.diagonal().array() += 1.0;
  return jac;
}

}  // namespace blpnp
