#include "inversion.hpp"

#include <cmath>
#include <sstream>

namespace blpnp {

void InversionSettings::validate() const {
  if (!(tol_delta > 0.0)) throw InputError("tol_delta must be positive");
  if (max_iter_contraction < 1 || max_iter_newton < 1) throw InputError("inversion max_iter must be >= 1");
  if (!(cond_limit > 0.0)) throw InputError("cond_limit must be positive");
}

namespace {

constexpr int kMaxHalvings = 10;

Vector residual_from_totals(const VectorCRef& log_shares_t, const Vector& totals, double n, Index market) {
  for (Index j = 0; j < totals.size(); ++j)
    if (!(totals(j) > 0.0)) {
      std::ostringstream os;
      os << "zero predicted share for product " << j << " in market " << market;
      throw NumericalError(os.str());
    }
  return log_shares_t.array() - (totals.array() / n).log();
}

}  // namespace

Vector logit_delta(const VectorCRef& log_shares_t) {
  const double outside = 1.0 - log_shares_t.array().exp().sum();
  return log_shares_t.array() - std::log(outside);
}

Vector log_share_residual(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const Matrix& mu, Index market) {
  const ChoiceProbs p = choice_probs_from_shifts(delta_t, mu, market);
  const Vector totals = p.inside.colwise().sum().transpose();
  return residual_from_totals(log_shares_t, totals, static_cast<double>(mu.rows()), market);
}

LinearizedShares linearize_shares(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const Matrix& mu,
                                  Index market) {
  LinearizedShares lin;
  lin.probs = choice_probs_from_shifts(delta_t, mu, market).inside;
  lin.totals = lin.probs.colwise().sum().transpose();
  lin.residual = residual_from_totals(log_shares_t, lin.totals, static_cast<double>(mu.rows()), market);
  const Index J = mu.cols();
  lin.cross.resize(J, J);
  lin.cross.noalias() = lin.probs.transpose() * lin.probs;
  lin.jacobian = -(lin.totals.cwiseInverse().asDiagonal() * lin.cross);
  lin.jacobian.diagonal().array() += 1.0;
  lin.lu.compute(lin.jacobian);
  lin.rcond = lin.lu.rcond();
  return lin;
}

bool newton_direction(const LinearizedShares& lin, double cond_limit, Vector& step) {
  if (!(lin.rcond * cond_limit >= 1.0)) return false;
  Vector s = lin.lu.solve(lin.residual);
  if (!s.allFinite()) return false;
  step = std::move(s);
  return true;
}

Vector contraction_step(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const MarketView& m,
                        const RandomCoefs& rc) {
  const Matrix mu = taste_shifts(m, rc);
  return delta_t + log_share_residual(delta_t, log_shares_t, mu, m.market);
}

NewtonStep newton_kantorovich_step(const VectorCRef& delta_t, const VectorCRef& log_shares_t, const MarketView& m,
                                   const RandomCoefs& rc, double cond_limit) {
  const Matrix mu = taste_shifts(m, rc);
  const LinearizedShares lin = linearize_shares(delta_t, log_shares_t, mu, m.market);
  NewtonStep out;
  out.rcond = lin.rcond;
  Vector step;
  if (newton_direction(lin, cond_limit, step)) {
    out.delta = delta_t + step;
  } else {
    out.delta = delta_t + lin.residual;
    out.fell_back = true;
  }
  return out;
}

DeltaSolve solve_delta(const VectorCRef& log_shares_t, const MarketView& m, const RandomCoefs& rc,
                       const InversionSettings& settings, InversionMethod method, const std::optional<Vector>& start) {
  settings.validate();
  const Matrix mu = taste_shifts(m, rc);
  DeltaSolve out;
  out.delta = start ? *start : logit_delta(log_shares_t);
  if (out.delta.size() != log_shares_t.size()) throw InputError("start delta has wrong length");

  const int max_iter =
      method == InversionMethod::Newton ? settings.max_iter_newton : settings.max_iter_contraction;

  if (method == InversionMethod::Contraction) {
    Vector r = log_share_residual(out.delta, log_shares_t, mu, m.market);
    out.residual = r.lpNorm<Eigen::Infinity>();
    while (!(out.residual < settings.tol_delta)) {
      if (out.iterations >= max_iter) break;
      out.delta += r;
      ++out.iterations;
      r = log_share_residual(out.delta, log_shares_t, mu, m.market);
      out.residual = r.lpNorm<Eigen::Infinity>();
    }
  } else {
    LinearizedShares lin = linearize_shares(out.delta, log_shares_t, mu, m.market);
    out.residual = lin.residual.lpNorm<Eigen::Infinity>();
    while (!(out.residual < settings.tol_delta)) {
      if (out.iterations >= max_iter) break;
      ++out.iterations;
      Vector step;
      bool newton = newton_direction(lin, settings.cond_limit, step);
      if (newton) {
        // halve the Newton step until the residual drops, else take a contraction step
        bool accepted = false;
        for (int halving = 0; halving < kMaxHalvings && !accepted; ++halving, step *= 0.5) {
          Vector trial = out.delta + step;
          LinearizedShares next;
          try {
            next = linearize_shares(trial, log_shares_t, mu, m.market);
          } catch (const NumericalError&) {
            continue;
          }
          if (next.residual.lpNorm<Eigen::Infinity>() < out.residual) {
            out.delta = std::move(trial);
            lin = std::move(next);
            out.residual = lin.residual.lpNorm<Eigen::Infinity>();
            accepted = true;
          }
        }
        if (accepted) continue;
      }
      ++out.fallbacks;
      out.delta += lin.residual;
      lin = linearize_shares(out.delta, log_shares_t, mu, m.market);
      out.residual = lin.residual.lpNorm<Eigen::Infinity>();
    }
  }
  if (!(out.residual < settings.tol_delta)) {
    std::ostringstream os;
    os << (method == InversionMethod::Newton ? "Newton" : "contraction") << " inversion did not converge in market "
       << m.market << " after " << out.iterations << " iterations (residual " << out.residual << ")";
    throw ConvergenceError(os.str(), out.delta, out.residual);
  }
  return out;
}

}  // namespace blpnp
