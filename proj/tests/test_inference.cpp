#include "helpers.hpp"
#include "inference.hpp"

#include <doctest.h>

#include <cmath>

using namespace blpnp;
using namespace blpnp::test;

namespace {

struct Fixture {
  MarketDataset data;
  GmmProblem problem;
  FitResult fit;

  explicit Fixture(MarketDataset d)
      : data(std::move(d)), problem(data, build_weight_matrix(data, WeightKind::TwoStage)) {}
};

Fixture& simulated() {
  static Fixture f = [] {
    Fixture out(reduced_instruments(small_dgp(12, 20, 200, 31).data));
    out.fit = fit_npgmm(out.problem, {}, random_starts(out.problem, 1, 7)[0]);
    return out;
  }();
  return f;
}

Vector lambda_star(const GmmProblem& pr, const RandomCoefs& rc) {
  const MarketDataset& d = pr.data();
  Vector delta(d.observations());
  for (Index t = 0; t < d.markets(); ++t)
    d.product_segment(delta, t) = solve_delta(d.log_shares(t), d.market(t), rc, {}).delta;
  return outside_probs_all(pr, delta, rc);
}

double min_eig(const Matrix& m) { return Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().minCoeff(); }

double sym_err(const Matrix& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() / std::max(1.0, m.cwiseAbs().maxCoeff()); }

}  // namespace

TEST_CASE("effective instruments reproduce the pseudo-GMM gradient") {
  Fixture& f = simulated();
  REQUIRE(f.fit.converged);
  const Matrix zs = effective_instruments(f.fit, f.problem);
  const Vector xi = pseudo_residuals(f.fit, f.problem);
  const Vector grad = criterion_Q_gradient(f.problem, f.fit.lambda_hat.lambda, f.fit.theta_hat);
  CHECK((zs.transpose() * xi / static_cast<double>(f.data.observations()) - grad).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(npgmm_variance(f.fit, f.problem).gradient_identity_error < 1e-10);

  SUBCASE("non-converged fits are refused") {
    FitResult bad = f.fit;
    bad.converged = false;
    CHECK_THROWS_AS(effective_instruments(bad, f.problem), InputError);
    CHECK_THROWS_AS(npgmm_variance(bad, f.problem), InputError);
  }
}

TEST_CASE("zero residuals give a zero gradient") {
  DgpConfig c;
  c.J = 12;
  c.T = 8;
  c.N = 200;
  c.seed = 11;
  c.zero_xi = true;
  c.sigma_true.setZero();
  Fixture f(reduced_instruments(generate_dataset(c).data));
  f.fit = fit_npgmm(f.problem, {}, logit_start(f.problem));
  REQUIRE(f.fit.converged);
  const Vector xi = pseudo_residuals(f.fit, f.problem);
  CHECK(xi.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(criterion_Q_gradient(f.problem, f.fit.lambda_hat.lambda, f.fit.theta_hat).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(npgmm_variance(f.fit, f.problem).gradient_identity_error < 1e-12);
}

TEST_CASE("lambda Jacobian") {
  Fixture& f = simulated();
  REQUIRE(f.fit.converged);
  const Matrix L = lambda_jacobian(f.fit, f.problem);
  const Index K = f.data.chars(), p = f.fit.theta_hat.rc.size();
  REQUIRE(L.rows() == f.data.markets() * f.data.draws());
  CHECK(L.leftCols(K).cwiseAbs().maxCoeff() == 0.0);

  // finite differences through the full inversion
  const RandomCoefs rc = f.fit.theta_hat.rc;
  for (Index c = 0; c < p; ++c) {
    Vector up = rc.packed(), dn = up;
    const double h = 1e-5;
    up(c) += h;
    dn(c) -= h;
    const Vector fd = (lambda_star(f.problem, RandomCoefs::unpack(up, K, 0)) -
                       lambda_star(f.problem, RandomCoefs::unpack(dn, K, 0))) /
                      (2.0 * h);
    const double err = (fd - L.col(K + c)).lpNorm<Eigen::Infinity>() / std::max(1e-8, fd.lpNorm<Eigen::Infinity>());
    CAPTURE(c);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("score Jacobian including the lambda channel") {
  Fixture& f = simulated();
  REQUIRE(f.fit.converged);
  const VarianceReport rep = npgmm_variance(f.fit, f.problem);
  const Index K = f.data.chars();
  const Vector theta = f.fit.theta_hat.stacked();
  const Matrix total = rep.hessian + rep.omega_tl_times_Lambda;
  // d/dtheta' of grad_theta Q(lambda*(sigma), theta)
  Matrix fd(theta.size(), theta.size());
  for (Index c = 0; c < theta.size(); ++c) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta(c)));
    Vector up = theta, dn = theta;
    up(c) += h;
    dn(c) -= h;
    const ModelParameters tu = ModelParameters::unstack(up, K, 0), td = ModelParameters::unstack(dn, K, 0);
    fd.col(c) = (criterion_Q_gradient(f.problem, lambda_star(f.problem, tu.rc), tu) -
                 criterion_Q_gradient(f.problem, lambda_star(f.problem, td.rc), td)) /
                (2.0 * h);
  }
  fd = 0.5 * (fd + fd.transpose()).eval();
  const Matrix asym = 0.5 * (total + total.transpose());
  CHECK((asym - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("variance collapse when the lambda channel is switched off") {
  Fixture& f = simulated();
  REQUIRE(f.fit.converged);
  for (OmegaKind kind : {OmegaKind::Sandwich, OmegaKind::OuterProduct, OmegaKind::Hessian}) {
    CAPTURE(omega_kind_name(kind));
    VarianceOptions o;
    o.kind = kind;
    o.zero_lambda_jacobian = true;
    const VarianceReport a = npgmm_variance(f.fit, f.problem, o);
    o.zero_lambda_jacobian = false;
    o.zero_omega_tl = true;
    const VarianceReport b = npgmm_variance(f.fit, f.problem, o);
    const double scale = a.v_gmm.cwiseAbs().maxCoeff();
    if (kind == OmegaKind::Sandwich) {
      CHECK(a.v_np == a.v_gmm);
      CHECK(b.v_np == b.v_gmm);
    } else {
      CHECK((a.v_np - a.v_gmm).cwiseAbs().maxCoeff() < 1e-10 * scale);
      CHECK((b.v_np - b.v_gmm).cwiseAbs().maxCoeff() < 1e-10 * scale);
    }
    CHECK(a.omega_tl_times_Lambda.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("variance matrices are symmetric positive semidefinite") {
  Fixture& f = simulated();
  REQUIRE(f.fit.converged);
  for (OmegaKind kind : {OmegaKind::Sandwich, OmegaKind::OuterProduct}) {
    CAPTURE(omega_kind_name(kind));
    VarianceOptions o;
    o.kind = kind;
    const VarianceReport r = npgmm_variance(f.fit, f.problem, o);
    CHECK(sym_err(r.v_np) < 1e-8);
    CHECK(sym_err(r.v_gmm) < 1e-8);
    CHECK(min_eig(r.v_np) >= -1e-10 * r.v_np.cwiseAbs().maxCoeff());
    CHECK(min_eig(r.v_gmm) >= -1e-10 * r.v_gmm.cwiseAbs().maxCoeff());
    CHECK(r.se_np.allFinite());
    for (Index i = 0; i < r.se_np.size(); ++i) CHECK(r.se_np(i) == doctest::Approx(std::sqrt(r.v_np(i, i) / 240.0)));
  }
  CHECK_THROWS_AS(parse_omega_kind("robust"), InputError);
}
