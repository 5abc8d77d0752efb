#include "inference.hpp"

#include "parallel.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace blpnp {

const char* omega_kind_name(OmegaKind k) {
  switch (k) {
    case OmegaKind::Sandwich:
      return "sandwich";
    case OmegaKind::OuterProduct:
      return "outer-product";
    case OmegaKind::Hessian:
      return "hessian";
  }
  return "unknown";
}

OmegaKind parse_omega_kind(const std::string& name) {
  if (name == "sandwich") return OmegaKind::Sandwich;
  if (name == "outer-product") return OmegaKind::OuterProduct;
  if (name == "hessian") return OmegaKind::Hessian;
  throw InputError("unknown variance estimator '" + name + "' (expected sandwich, outer-product or hessian)");
}

namespace {

void require_fit(const FitResult& fit, const MarketDataset& data) {
  if (!fit.converged) throw InputError("variance requested for a fit that did not converge");
  if (fit.delta_hat.delta.size() != data.observations() || fit.lambda_hat.lambda.size() != data.markets() * data.draws())
    throw InputError("fit does not match the dataset");
}

// Column c of the packed random coefficients: characteristic index and the
// consumer-level driver (nu_k or d_r).
struct Driver {
  Index k;
  Eigen::Ref<const Vector> v;
};

Driver driver(const MarketView& m, Index c) {
  const Index K = m.x.cols(), R = m.demo.cols();
  if (c < K) return {c, m.nu.col(c)};
  return {(c - K) / R, m.demo.col((c - K) % R)};
}

Matrix market_lambda_jacobian(const MarketDataset& data, const FitResult& fit, Index t) {
  const MarketView m = data.market(t);
  const RandomCoefs& rc = fit.theta_hat.rc;
  const auto d = data.product_segment(fit.delta_hat.delta, t);
  const Matrix mu = taste_shifts(m, rc);
  const LinearizedShares lin = linearize_shares(d, data.log_shares(t), mu, t);
  if (!(lin.rcond * 1e12 >= 1.0)) {
    std::ostringstream os;
    os << "share Jacobian is singular in market " << t;
    throw NumericalError(os.str());
  }
  const Vector p0 = choice_probs_from_shifts(d, mu, t).outside;
  const Matrix dd = -lin.lu.solve(log_share_param_jacobian(lin.probs, lin.totals, m));  // d delta* / d rc
  const Matrix xbar = lin.probs * m.x;
  const Index K = m.x.cols(), p = rc.size();
  Matrix L = Matrix::Zero(m.nu.rows(), K + p);
  for (Index c = 0; c < p; ++c) {
    const Driver dr = driver(m, c);
    L.col(K + c) = -(p0.array() * ((lin.probs * dd.col(c)).array() + dr.v.array() * xbar.col(dr.k).array())).matrix();
  }
  return L;
}

// z*, xi, the moment Jacobian D and the full-theta gradient pieces.
struct ScorePieces {
  Vector xi;     // T*J
  Matrix e;      // T*J x dim theta, d xi / d theta'
  Matrix d;      // q x dim theta, (1/JT) Z'e
  Vector m;      // q
  Matrix zstar;  // T*J x dim theta
};

ScorePieces score_pieces(const FitResult& fit, const GmmProblem& pr) {
  const MarketDataset& data = pr.data();
  const Index K = data.chars(), p = fit.theta_hat.rc.size(), J = data.products();
  ScorePieces s;
  s.xi.resize(data.observations());
  s.e.resize(data.observations(), K + p);
  for_each_market(data.markets(), pr.threads(), [&](Index t) {
    const MarketView m = data.market(t);
    ClosedFormInversion inv = closed_form_inversion(data.log_shares(t), data.consumer_segment(fit.lambda_hat.lambda, t),
                                                    m, fit.theta_hat.rc, true);
    s.xi.segment(t * J, J) = inv.delta - m.x * fit.theta_hat.beta;
    s.e.block(t * J, 0, J, K) = -m.x;
    s.e.block(t * J, K, J, p) = inv.gradient;
  });
  s.d = pr.scale() * (data.z().transpose() * s.e);
  s.m = pr.scale() * (data.z().transpose() * s.xi);
  s.zstar = 2.0 * data.z() * (pr.weight() * s.d);
  return s;
}

Matrix sandwich(const Eigen::FullPivLU<Matrix>& bread, const Matrix& meat) {
  const Matrix left = bread.solve(meat);
  Matrix v = bread.solve(Matrix(left.transpose()));
  return 0.5 * (v + v.transpose());
}

Eigen::FullPivLU<Matrix> factor(const Matrix& b, const char* what) {
  Eigen::FullPivLU<Matrix> lu(b);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << what << " is singular; the parameters look weakly identified";
    throw NumericalError(os.str());
  }
  return lu;
}

Vector standard_errors(const Matrix& v, double n) {
  Vector se(v.rows());
  for (Index i = 0; i < v.rows(); ++i) se(i) = v(i, i) >= 0.0 ? std::sqrt(v(i, i) / n) : std::nan("");
  return se;
}

}  // namespace

Matrix effective_instruments(const FitResult& fit, const GmmProblem& problem) {
  require_fit(fit, problem.data());
  return score_pieces(fit, problem).zstar;
}

Vector pseudo_residuals(const FitResult& fit, const GmmProblem& problem) {
  require_fit(fit, problem.data());
  return score_pieces(fit, problem).xi;
}

Matrix lambda_jacobian(const FitResult& fit, const GmmProblem& problem) {
  const MarketDataset& data = problem.data();
  require_fit(fit, data);
  const Index N = data.draws();
  Matrix out(data.markets() * N, data.parameter_count());
  for_each_market(data.markets(), problem.threads(),
                  [&](Index t) { out.middleRows(t * N, N) = market_lambda_jacobian(data, fit, t); });
  return out;
}

VarianceReport npgmm_variance(const FitResult& fit, const GmmProblem& problem, const VarianceOptions& options) {
  const MarketDataset& data = problem.data();
  require_fit(fit, data);
  const Index K = data.chars(), p = fit.theta_hat.rc.size(), dim = K + p, J = data.products(), q = data.instruments();
  const double scale = problem.scale();
  const ScorePieces s = score_pieces(fit, problem);

  VarianceReport rep;
  rep.kind = options.kind;

  const Matrix g = s.zstar.array().colwise() * s.xi.array();
  rep.meat = scale * (g.transpose() * g);
  rep.meat = 0.5 * (rep.meat + rep.meat.transpose()).eval();

  const Vector grad = criterion_Q_gradient(problem, fit.lambda_hat.lambda, fit.theta_hat);
  rep.gradient_identity_error = (scale * (s.zstar.transpose() * s.xi) - grad).lpNorm<Eigen::Infinity>();

  // score Jacobian in theta at fixed lambda, central differences of the analytic gradient
  const Vector theta = fit.theta_hat.stacked();
  rep.hessian.resize(dim, dim);
  for (Index c = 0; c < dim; ++c) {
    const double h = options.fd_step * std::max(1.0, std::abs(theta(c)));
    Vector up = theta, down = theta;
    up(c) += h;
    down(c) -= h;
    const Vector gu = criterion_Q_gradient(problem, fit.lambda_hat.lambda, ModelParameters::unstack(up, K, data.demographics()));
    const Vector gd =
        criterion_Q_gradient(problem, fit.lambda_hat.lambda, ModelParameters::unstack(down, K, data.demographics()));
    rep.hessian.col(c) = (gu - gd) / (2.0 * h);
  }
  rep.hessian = 0.5 * (rep.hessian + rep.hessian.transpose()).eval();

  // d(score)/d lambda' Lambda_theta, accumulated market by market along the
  // columns of Lambda_theta
  rep.omega_tl_times_Lambda = Matrix::Zero(dim, dim);
  if (!options.zero_lambda_jacobian && !options.zero_omega_tl) {
    const Index T = data.markets();
    std::vector<Matrix> dm_t(static_cast<std::size_t>(T));                // q x dim (directions)
    std::vector<std::vector<Matrix>> dd_t(static_cast<std::size_t>(T));   // per rc column: q x dim (directions)
    for_each_market(T, problem.threads(), [&](Index t) {
      const MarketView m = data.market(t);
      const auto lam = data.consumer_segment(fit.lambda_hat.lambda, t);
      const Matrix L = market_lambda_jacobian(data, fit, t);
      const Matrix a = L.array().colwise() / lam.array();
      const Matrix w = inversion_weights(lam, m, fit.theta_hat.rc);  // N x J
      const Matrix dh = w.transpose() * a;                             // J x dim
      const auto zt = data.z().middleRows(t * J, J);
      dm_t[t] = -(zt.transpose() * dh);
      dd_t[t].resize(static_cast<std::size_t>(p));
      for (Index c = 0; c < p; ++c) {
        const Driver dr = driver(m, c);
        const Vector mean = w.transpose() * dr.v;                                      // J
        const Matrix wva = w.transpose() * (a.array().colwise() * dr.v.array()).matrix();  // J x dim
        const Matrix de = -((wva - mean.asDiagonal() * dh).array().colwise() * m.x.col(dr.k).array()).matrix();
        dd_t[t][c] = zt.transpose() * de;
      }
    });
    Matrix dm = Matrix::Zero(q, dim);
    std::vector<Matrix> dd(static_cast<std::size_t>(p), Matrix::Zero(q, dim));
    for (Index t = 0; t < T; ++t) {
      dm += dm_t[t];
      for (Index c = 0; c < p; ++c) dd[c] += dd_t[t][c];
    }
    dm *= scale;
    for (auto& x : dd) x *= scale;
    const Vector wm = problem.weight() * s.m;
    const Matrix wd = problem.weight() * s.d;
    for (Index dir = 0; dir < dim; ++dir) {
      Vector col = 2.0 * (wd.transpose() * dm.col(dir));
      for (Index c = 0; c < p; ++c) col(K + c) += 2.0 * dd[c].col(dir).dot(wm);
      rep.omega_tl_times_Lambda.col(dir) = col;
    }
  }

  switch (options.kind) {
    case OmegaKind::Sandwich: {
      rep.omega_tt = rep.hessian;
      rep.v_np = sandwich(factor(rep.hessian + rep.omega_tl_times_Lambda, "bread matrix"), rep.meat);
      rep.v_gmm = sandwich(factor(rep.hessian, "score Jacobian"), rep.meat);
      break;
    }
    case OmegaKind::OuterProduct:
    case OmegaKind::Hessian: {
      rep.omega_tt = options.kind == OmegaKind::OuterProduct ? rep.meat : rep.hessian;
      rep.v_np = sandwich(factor(rep.omega_tt + rep.omega_tl_times_Lambda, "bread matrix"), rep.omega_tt);
      const Matrix inv = factor(rep.omega_tt, "Omega_tt").inverse();
      rep.v_gmm = 0.5 * (inv + inv.transpose());
      break;
    }
  }
  const double n = static_cast<double>(data.observations());
  rep.se_np = standard_errors(rep.v_np, n);
  rep.se_gmm = standard_errors(rep.v_gmm, n);
  return rep;
}

}  // namespace blpnp
