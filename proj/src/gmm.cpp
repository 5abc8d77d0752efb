#include "gmm.hpp"

#include "parallel.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace blpnp {

WeightMatrix build_weight_matrix(const MarketDataset& data, WeightKind kind) {
  const Index q = data.instruments();
  if (kind == WeightKind::Identity) return {Matrix::Identity(q, q)};

  Eigen::ColPivHouseholderQR<Matrix> qr(data.z());
  if (qr.rank() < q) {
    std::ostringstream os;
    os << "instrument matrix has rank " << qr.rank() << " < " << q << "; collinear columns:";
    const auto& perm = qr.colsPermutation().indices();
    for (Index i = qr.rank(); i < q; ++i) os << " z_" << perm(i) + 1;
    throw InputError(os.str());
  }
  const double scale = 1.0 / static_cast<double>(data.observations());
  Matrix zz = scale * (data.z().transpose() * data.z());
  Eigen::LLT<Matrix> llt(zz);
  if (llt.info() != Eigen::Success) throw InputError("Z'Z is not positive definite");
  Matrix w = llt.solve(Matrix::Identity(q, q));
  w = 0.5 * (w + w.transpose()).eval();
  return {std::move(w)};
}

GmmProblem::GmmProblem(const MarketDataset& data, WeightMatrix w, int threads)
    : data_(&data), w_(std::move(w.w)), scale_(1.0 / static_cast<double>(data.observations())), threads_(1) {
  set_threads(threads);
  const Index q = data.instruments();
  if (w_.rows() != q || w_.cols() != q) throw InputError("weight matrix must be q x q");
  if (!w_.allFinite()) throw InputError("weight matrix has non-finite entries");
  if ((w_ - w_.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, w_.lpNorm<Eigen::Infinity>()))
    throw InputError("weight matrix is not symmetric");
  if (Eigen::LLT<Matrix>(w_).info() != Eigen::Success) throw InputError("weight matrix is not positive definite");

  ztx_ = data.z().transpose() * data.x();
  const Matrix xzw = ztx_.transpose() * w_;
  const Matrix normal = xzw * ztx_;
  Eigen::FullPivLU<Matrix> lu(normal);
  if (!lu.isInvertible()) throw InputError("X'ZWZ'X is singular; beta is not identified by these instruments");
  beta_map_ = lu.solve(xzw);
  projector_ = Matrix::Identity(q, q) - ztx_ * beta_map_;
}

Vector linear_iv_gmm_beta(const Vector& delta, const GmmProblem& problem) {
  const MarketDataset& data = problem.data();
  if (delta.size() != data.observations()) throw InputError("delta must have T*J entries");
  return problem.beta_map() * (data.z().transpose() * delta);
}

Vector linear_iv_gmm_beta(const Vector& delta, const MarketDataset& data, const WeightMatrix& w) {
  return linear_iv_gmm_beta(delta, GmmProblem(data, w));
}

Vector sample_moments(const Vector& xi, const MarketDataset& data) {
  if (xi.size() != data.observations()) throw InputError("residuals must have T*J entries");
  return (data.z().transpose() * xi) / static_cast<double>(data.observations());
}

namespace {

struct Assembled {
  Vector ztd;   // Z' delta
  Matrix ztdd;  // Z' d delta / d rc
};

// fn(t, delta_t, ddelta_t or nullptr) fills one market. Market contributions
// are summed in market order.
template <class F>
Assembled assemble(const GmmProblem& pr, Index p, bool grad, Vector* delta_out, F&& fn) {
  const MarketDataset& data = pr.data();
  const Index T = data.markets(), J = data.products(), q = data.instruments();
  std::vector<Vector> ztd(static_cast<std::size_t>(T));
  std::vector<Matrix> ztdd(grad ? static_cast<std::size_t>(T) : 0);
  if (delta_out) delta_out->resize(data.observations());
  for_each_market(T, pr.threads(), [&](Index t) {
    Vector d;
    Matrix dd;
    fn(t, d, grad ? &dd : nullptr);
    const auto zt = data.z().middleRows(t * J, J);
    ztd[t].noalias() = zt.transpose() * d;
    if (grad) ztdd[t].noalias() = zt.transpose() * dd;
    if (delta_out) delta_out->segment(t * J, J) = d;
  });
  Assembled a{Vector::Zero(q), Matrix::Zero(q, grad ? p : 0)};
  for (Index t = 0; t < T; ++t) {
    a.ztd += ztd[t];
    if (grad) a.ztdd += ztdd[t];
  }
  return a;
}

CriterionEval concentrated(const GmmProblem& pr, const Assembled& a, bool grad) {
  CriterionEval ev;
  ev.beta = pr.beta_map() * a.ztd;
  const Vector m = pr.scale() * (pr.projector() * a.ztd);
  const Vector wm = pr.weight() * m;
  ev.value = m.dot(wm);
  if (grad) ev.gradient = 2.0 * pr.scale() * ((pr.projector() * a.ztdd).transpose() * wm);
  return ev;
}

double full_value(const GmmProblem& pr, const Assembled& a, const Vector& beta, Vector* grad) {
  const Vector m = pr.scale() * (a.ztd - pr.ztx() * beta);
  const Vector wm = pr.weight() * m;
  if (grad) {
    const Index K = beta.size();
    grad->resize(K + a.ztdd.cols());
    grad->head(K) = -2.0 * pr.scale() * (pr.ztx().transpose() * wm);
    grad->tail(a.ztdd.cols()) = 2.0 * pr.scale() * (a.ztdd.transpose() * wm);
  }
  return m.dot(wm);
}

void check_rc(const MarketDataset& data, const RandomCoefs& rc) {
  if (rc.sigma.size() != data.chars() || rc.pi.rows() != data.chars() || rc.pi.cols() != data.demographics())
    throw InputError("random coefficients do not match the dataset dimensions");
  if (!rc.sigma.allFinite() || !rc.pi.allFinite()) throw InputError("random coefficients must be finite");
}

void check_theta(const MarketDataset& data, const ModelParameters& theta) {
  check_rc(data, theta.rc);
  if (theta.beta.size() != data.chars()) throw InputError("beta must have K entries");
  if (!theta.beta.allFinite()) throw InputError("beta must be finite");
}

void closed_form_market(const MarketDataset& data, const Vector& lambda, const RandomCoefs& rc, Index t, Vector& d,
                        Matrix* dd) {
  const auto lam = data.consumer_segment(lambda, t);
  ClosedFormInversion inv = closed_form_inversion(data.log_shares(t), lam, data.market(t), rc, dd != nullptr);
  d = std::move(inv.delta);
  if (dd) *dd = std::move(inv.gradient);
}

void ablp_market(const MarketDataset& data, const Vector& delta0, const RandomCoefs& rc, Index t, double cond_limit,
                 bool fd, Vector& d, Matrix* dd) {
  const MarketView m = data.market(t);
  const auto d0 = data.product_segment(delta0, t);
  const Matrix mu = taste_shifts(m, rc);
  const LinearizedShares lin = linearize_shares(d0, data.log_shares(t), mu, t);
  Vector y;
  if (!newton_direction(lin, cond_limit, y)) {
    std::ostringstream os;
    os << "share Jacobian is singular or ill-conditioned in market " << t << " (rcond " << lin.rcond << ")";
    throw NumericalError(os.str());
  }
  d = d0 + y;
  if (!dd) return;

  const Index p = rc.size();
  if (fd) {
    dd->resize(d.size(), p);
    const Vector base = rc.packed();
    for (Index c = 0; c < p; ++c) {
      Vector shifted = base;
      const double h = 1e-6 * std::max(1.0, std::abs(base(c)));
      shifted(c) += h;
      const RandomCoefs rc_h = RandomCoefs::unpack(shifted, rc.chars(), rc.demographics());
      Vector d_h;
      ablp_market(data, delta0, rc_h, t, cond_limit, false, d_h, nullptr);
      dd->col(c) = (d_h - d) / h;
    }
    return;
  }

  const Index N = m.nu.rows(), J = m.x.rows(), K = m.x.cols(), R = m.demo.cols();
  const Matrix& P = lin.probs;
  const Vector& S = lin.totals;
  const Matrix xbar = P * m.x;  // N x K
  const Eigen::ArrayXd inv_s = S.array().inverse();
  Matrix rhs(J, p);
  Matrix G(N, J), dP(N, J), C(J, J), dJ(J, J);
  for (Index c = 0; c < p; ++c) {
    const Index k = c < K ? c : (c - K) / R;
    const auto v = c < K ? m.nu.col(k) : m.demo.col((c - K) % R);
    // dP_ij = p_ij v_i (x_jk - xbar_ik)
    G.noalias() = v * m.x.col(k).transpose();
    G.colwise() -= (v.array() * xbar.col(k).array()).matrix();
    dP = (P.array() * G.array()).matrix();
    const Vector dS = dP.colwise().sum().transpose();
    C.noalias() = dP.transpose() * P;
    dJ = (dS.array() * inv_s * inv_s).matrix().asDiagonal() * lin.cross;
    dJ -= inv_s.matrix().asDiagonal() * (C + C.transpose());
    rhs.col(c) = -(dJ * y) - (dS.array() * inv_s).matrix();
  }
  *dd = lin.lu.solve(rhs);
}

}  // namespace

Matrix log_share_param_jacobian(const Matrix& probs, const Vector& totals, const MarketView& m) {
  const Index J = m.x.rows(), K = m.x.cols(), R = m.demo.cols();
  const Matrix xbar = probs * m.x;  // N x K
  Matrix out(J, K + K * R);
  const Matrix pt_nu = probs.transpose() * m.nu;
  const Matrix pt_nux = probs.transpose() * (m.nu.array() * xbar.array()).matrix();
  for (Index k = 0; k < K; ++k)
    out.col(k) = (pt_nu.col(k).array() * m.x.col(k).array() - pt_nux.col(k).array()).matrix();
  if (R > 0) {
    const Matrix pt_d = probs.transpose() * m.demo;
    Matrix dx(m.nu.rows(), K * R);
    for (Index k = 0; k < K; ++k)
      for (Index r = 0; r < R; ++r) dx.col(k * R + r) = (m.demo.col(r).array() * xbar.col(k).array()).matrix();
    const Matrix pt_dx = probs.transpose() * dx;
    for (Index k = 0; k < K; ++k)
      for (Index r = 0; r < R; ++r)
        out.col(K + k * R + r) =
            (pt_d.col(r).array() * m.x.col(k).array() - pt_dx.col(k * R + r).array()).matrix();
  }
  return totals.cwiseInverse().asDiagonal() * out;
}

double criterion_G(const GmmProblem& problem, const ModelParameters& theta, const InversionSettings& settings,
                   Vector* delta_out) {
  const MarketDataset& data = problem.data();
  check_theta(data, theta);
  const Assembled a = assemble(problem, 0, false, delta_out, [&](Index t, Vector& d, Matrix*) {
    d = solve_delta(data.log_shares(t), data.market(t), theta.rc, settings).delta;
  });
  return full_value(problem, a, theta.beta, nullptr);
}

CriterionEval criterion_G_concentrated(const GmmProblem& problem, const RandomCoefs& rc,
                                       const InversionSettings& settings, Vector& warm, bool with_gradient,
                                       int* inner_iterations) {
  const MarketDataset& data = problem.data();
  check_rc(data, rc);
  if (warm.size() != data.observations()) throw InputError("warm-start delta must have T*J entries");
  std::vector<int> iters(static_cast<std::size_t>(data.markets()), 0);
  Vector solved;
  const Assembled a = assemble(problem, rc.size(), with_gradient, &solved, [&](Index t, Vector& d, Matrix* dd) {
    const MarketView m = data.market(t);
    const Vector start = data.product_segment(warm, t);
    DeltaSolve sol = solve_delta(data.log_shares(t), m, rc, settings, InversionMethod::Newton, start);
    iters[t] = sol.iterations;
    d = std::move(sol.delta);
    if (!dd) return;
    const LinearizedShares lin = linearize_shares(d, data.log_shares(t), taste_shifts(m, rc), t);
    if (!(lin.rcond * settings.cond_limit >= 1.0)) {
      std::ostringstream os;
      os << "share Jacobian is ill-conditioned in market " << t;
      throw NumericalError(os.str());
    }
    *dd = -lin.lu.solve(log_share_param_jacobian(lin.probs, lin.totals, m));
  });
  warm = std::move(solved);
  if (inner_iterations)
    for (int it : iters) *inner_iterations += it;
  return concentrated(problem, a, with_gradient);
}

double criterion_Q(const GmmProblem& problem, const Vector& lambda, const ModelParameters& theta) {
  const MarketDataset& data = problem.data();
  check_theta(data, theta);
  if (lambda.size() != data.markets() * data.draws()) throw InputError("lambda must have T*N entries");
  const Assembled a = assemble(problem, 0, false, nullptr, [&](Index t, Vector& d, Matrix* dd) {
    closed_form_market(data, lambda, theta.rc, t, d, dd);
  });
  return full_value(problem, a, theta.beta, nullptr);
}

Vector criterion_Q_gradient(const GmmProblem& problem, const Vector& lambda, const ModelParameters& theta) {
  const MarketDataset& data = problem.data();
  check_theta(data, theta);
  if (lambda.size() != data.markets() * data.draws()) throw InputError("lambda must have T*N entries");
  const Assembled a = assemble(problem, theta.rc.size(), true, nullptr, [&](Index t, Vector& d, Matrix* dd) {
    closed_form_market(data, lambda, theta.rc, t, d, dd);
  });
  Vector g;
  full_value(problem, a, theta.beta, &g);
  return g;
}

CriterionEval criterion_Q_concentrated(const GmmProblem& problem, const Vector& lambda, const RandomCoefs& rc,
                                       bool with_gradient) {
  const MarketDataset& data = problem.data();
  check_rc(data, rc);
  if (lambda.size() != data.markets() * data.draws()) throw InputError("lambda must have T*N entries");
  const Assembled a = assemble(problem, rc.size(), with_gradient, nullptr, [&](Index t, Vector& d, Matrix* dd) {
    closed_form_market(data, lambda, rc, t, d, dd);
  });
  return concentrated(problem, a, with_gradient);
}

Vector ablp_map(const GmmProblem& problem, const Vector& delta0, const RandomCoefs& rc, double cond_limit) {
  const MarketDataset& data = problem.data();
  check_rc(data, rc);
  if (delta0.size() != data.observations()) throw InputError("delta0 must have T*J entries");
  Vector out(data.observations());
  for_each_market(data.markets(), problem.threads(), [&](Index t) {
    Vector d;
    ablp_market(data, delta0, rc, t, cond_limit, false, d, nullptr);
    data.product_segment(out, t) = d;
  });
  return out;
}

double criterion_Q_ablp(const GmmProblem& problem, const Vector& delta0, const ModelParameters& theta) {
  const MarketDataset& data = problem.data();
  check_theta(data, theta);
  if (delta0.size() != data.observations()) throw InputError("delta0 must have T*J entries");
  const Assembled a = assemble(problem, 0, false, nullptr, [&](Index t, Vector& d, Matrix* dd) {
    ablp_market(data, delta0, theta.rc, t, 1e12, false, d, dd);
  });
  return full_value(problem, a, theta.beta, nullptr);
}

Vector criterion_Q_ablp_gradient(const GmmProblem& problem, const Vector& delta0, const ModelParameters& theta) {
  const MarketDataset& data = problem.data();
  check_theta(data, theta);
  if (delta0.size() != data.observations()) throw InputError("delta0 must have T*J entries");
  const Assembled a = assemble(problem, theta.rc.size(), true, nullptr, [&](Index t, Vector& d, Matrix* dd) {
    ablp_market(data, delta0, theta.rc, t, 1e12, false, d, dd);
  });
  Vector g;
  full_value(problem, a, theta.beta, &g);
  return g;
}

CriterionEval criterion_Q_ablp_concentrated(const GmmProblem& problem, const Vector& delta0, const RandomCoefs& rc,
                                            bool with_gradient, bool fd_gradient) {
  const MarketDataset& data = problem.data();
  check_rc(data, rc);
  if (delta0.size() != data.observations()) throw InputError("delta0 must have T*J entries");
  const Assembled a = assemble(problem, rc.size(), with_gradient, nullptr, [&](Index t, Vector& d, Matrix* dd) {
    ablp_market(data, delta0, rc, t, 1e12, fd_gradient, d, dd);
  });
  return concentrated(problem, a, with_gradient);
}

PseudoGmmResult minimize_pseudo_gmm(const GmmProblem& problem, PseudoCriterion kind, const Vector& anchor,
                                    const RandomCoefs& start, const OptimizerSettings& settings,
                                    bool ablp_fd_gradient) {
  const MarketDataset& data = problem.data();
  check_rc(data, start);
  const Index K = start.chars(), R = start.demographics();
  std::vector<std::pair<Vector, Vector>> betas;
  const Objective f = [&](const Vector& x, Vector* grad) {
    const RandomCoefs rc = RandomCoefs::unpack(x, K, R);
    CriterionEval ev = kind == PseudoCriterion::Q
                           ? criterion_Q_concentrated(problem, anchor, rc, grad != nullptr)
                           : criterion_Q_ablp_concentrated(problem, anchor, rc, grad != nullptr, ablp_fd_gradient);
    if (grad) *grad = std::move(ev.gradient);
    betas.emplace_back(x, std::move(ev.beta));
    return ev.value;
  };
  PseudoGmmResult res;
  res.optim = minimize_bfgs(f, start.packed(), settings);
  res.theta.rc = RandomCoefs::unpack(res.optim.x, K, R);
  for (auto it = betas.rbegin(); it != betas.rend(); ++it)
    if (it->first == res.optim.x) {
      res.theta.beta = it->second;
      break;
    }
  if (res.theta.beta.size() == 0) res.theta.beta = Vector::Constant(K, std::nan(""));
  return res;
}

}  // namespace blpnp
