#include "estimators.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace blpnp;
using namespace blpnp::test;

namespace {

MarketDataset logit_data() {
  DgpConfig c;
  c.J = 12;
  c.T = 8;
  c.N = 200;
  c.seed = 11;
  c.zero_xi = true;
  c.sigma_true.setZero();
  return reduced_instruments(generate_dataset(c).data);
}

EstimationState state(const Vector& delta, const Vector& theta) {
  return {{delta}, {}, ModelParameters::unstack(theta, theta.size() / 2, 0), 0};
}

FitResult result(double value, bool converged, int index) {
  FitResult r;
  r.criterion_value = value;
  r.converged = converged;
  r.start_index = index;
  return r;
}

// sigma enters only through sigma * nu with symmetric draws, so its sign is not identified
Vector sign_normalized(const ModelParameters& th) {
  ModelParameters out = th;
  out.rc.sigma = out.rc.sigma.cwiseAbs();
  return out.stacked();
}

}  // namespace

TEST_CASE("logit start") {
  SUBCASE("shares equal to the outside share") {
    const MarketDataset d(2, 2, (Matrix(4, 2) << 1, 0.3, 1, -1, 1, 2, 1, 0.1).finished(),
                          (Matrix(4, 2) << 1, 0.5, 1, 0.2, 1, -0.4, 1, 1.1).finished(), Vector::Constant(4, 1.0 / 3.0),
                          Matrix::Zero(6, 2), Matrix(6, 0));
    const GmmProblem pr(d, build_weight_matrix(d, WeightKind::TwoStage));
    const StartingPoint sp = logit_start(pr);
    CHECK(sp.delta.delta.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(sp.theta.rc.sigma.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("forward map reproduces the shares") {
    std::mt19937_64 g(40);
    const RandomData rd = random_dataset(g, 5, 6, 3, 10, 1, 4, 1.0);
    const GmmProblem pr(rd.data, build_weight_matrix(rd.data, WeightKind::TwoStage));
    const StartingPoint sp = logit_start(pr);
    const RandomCoefs zero = RandomCoefs::zeros(3, 1);
    for (Index t = 0; t < 5; ++t) {
      const Vector s = predict_shares(rd.data.product_segment(sp.delta.delta, t), rd.data.market(t), zero);
      CHECK((s - rd.data.shares(t)).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK((sp.theta.beta - linear_iv_gmm_beta(sp.delta.delta, pr)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("random starts") {
  const GeneratedData gd = small_dgp(12, 6, 100, 21);
  const MarketDataset d = reduced_instruments(gd.data);
  const GmmProblem pr(d, build_weight_matrix(d, WeightKind::TwoStage));
  const std::vector<StartingPoint> a = random_starts(pr, 5, 99), b = random_starts(pr, 5, 99);
  const StartingPoint logit = logit_start(pr);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].index == static_cast<int>(i));
    CHECK(a[i].theta.stacked() == b[i].theta.stacked());
    CHECK(a[i].delta.delta == b[i].delta.delta);
    for (Index k = 0; k < d.chars(); ++k) {
      CHECK(a[i].theta.rc.sigma(k) >= 0.0);
      CHECK(a[i].theta.rc.sigma(k) <= 0.5 * std::abs(logit.theta.beta(k)));
    }
    for (Index t = 0; t < d.markets(); ++t)
      CHECK(log_share_residual(d.product_segment(a[i].delta.delta, t), d.log_shares(t),
                               taste_shifts(d.market(t), a[i].theta.rc), t)
                .lpNorm<Eigen::Infinity>() < 1e-12);
  }
  CHECK(random_starts(pr, 5, 100)[0].theta.stacked() != a[0].theta.stacked());
  CHECK_THROWS_AS(random_starts(pr, 0, 1), InputError);
}

TEST_CASE("random starts with zero logit coefficients are the logit start") {
  const MarketDataset d(2, 2, (Matrix(4, 2) << 1, 0.3, 1, -1, 1, 2, 1, 0.1).finished(),
                        (Matrix(4, 2) << 1, 0.5, 1, 0.2, 1, -0.4, 1, 1.1).finished(), Vector::Constant(4, 1.0 / 3.0),
                        (Matrix(6, 2) << 0.1, 1, -0.2, 0.4, 1.3, -1, 0.2, 0.3, -0.7, 0.8, 1.1, 0.5).finished(),
                        Matrix(6, 0));
  const GmmProblem pr(d, build_weight_matrix(d, WeightKind::TwoStage));
  CHECK(logit_start(pr).theta.beta.cwiseAbs().maxCoeff() < 1e-14);
  for (const StartingPoint& sp : random_starts(pr, 3, 5)) {
    CHECK(sp.theta.rc.sigma.cwiseAbs().maxCoeff() < 1e-14);
    CHECK(sp.delta.delta.cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("check_convergence") {
  const Vector d = Vector::Constant(4, 0.3), th = (Vector(4) << 1, 2, 0.5, 0.2).finished();
  CHECK(check_convergence(state(d, th), state(d, th), 1e-6));
  CHECK(check_convergence(state(d, th), state(d.array() + 5e-7, th), 1e-6));
  Vector d2 = d;
  d2(2) += 2e-6;
  CHECK(!check_convergence(state(d, th), state(d2, th), 1e-6));
  Vector th2 = th;
  th2(3) += 1e-6;
  CHECK(!check_convergence(state(d, th), state(d, th2), 1e-6));
  CHECK_THROWS_AS(check_convergence(state(d, th), state(Vector::Zero(3), th), 1e-6), InputError);
}

TEST_CASE("multi_start_select") {
  CHECK(multi_start_select({result(0.7, true, 0)}).start_index == 0);
  const FitResult r = multi_start_select({result(0.5, true, 0), result(0.3, true, 1), result(0.3, true, 2)});
  CHECK(r.start_index == 1);
  CHECK(r.converged);
  CHECK(multi_start_select({result(0.1, false, 0), result(0.4, true, 1)}).start_index == 1);
  const FitResult none = multi_start_select({result(0.4, false, 0), result(0.2, false, 1)});
  CHECK(!none.converged);
  CHECK(none.start_index == 1);
  CHECK_THROWS_AS(multi_start_select({}), InputError);
}

TEST_CASE("logit data: all three estimators return the logit IV estimate") {
  const MarketDataset d = logit_data();
  const GmmProblem pr(d, build_weight_matrix(d, WeightKind::TwoStage));
  const StartingPoint sp = logit_start(pr);
  SolverConfig cfg;
  std::vector<FitResult> fits;
  for (Method m : {Method::NpGmm, Method::Ablp, Method::Nfxp}) {
    fits.push_back(fit(m, pr, cfg, sp));
    const FitResult& f = fits.back();
    CAPTURE(method_name(m));
    CHECK(f.converged);
    if (m != Method::Nfxp) CHECK(f.outer_iters <= 2);
    CHECK((f.theta_hat.beta - sp.theta.beta).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(f.theta_hat.rc.sigma.cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK((fits[0].theta_hat.stacked() - fits[1].theta_hat.stacked()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((fits[0].theta_hat.stacked() - fits[2].theta_hat.stacked()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("NP-GMM fixed point on simulated data") {
  const GeneratedData gd = small_dgp(12, 20, 200, 31);
  const MarketDataset d = reduced_instruments(gd.data);
  const GmmProblem pr(d, build_weight_matrix(d, WeightKind::TwoStage));
  const StartingPoint sp = random_starts(pr, 1, 7)[0];
  const SolverConfig cfg;
  const FitResult f = fit_npgmm(pr, cfg, sp);
  REQUIRE(f.converged);
  const Index K = d.chars();

  SUBCASE("pseudo-GMM first-order condition at fixed lambda") {
    CHECK(criterion_Q_gradient(pr, f.lambda_hat.lambda, f.theta_hat).lpNorm<Eigen::Infinity>() < 1e-6);
  }
  SUBCASE("mean utilities solve the demand system") { CHECK(f.share_residual < 1e-10); }
  SUBCASE("lambda is the model outside probability at the estimate") {
    CHECK(f.lambda_hat.lambda == outside_probs_all(pr, f.delta_hat.delta, f.theta_hat.rc));
  }
  SUBCASE("bookkeeping") {
    CHECK(f.inner_iters >= f.outer_iters);
    CHECK(f.criterion_evals >= f.inner_iters);
    CHECK(f.timings.n_outer == f.outer_iters);
    CHECK(f.timings.wall_clock_total >= f.timings.inner_wall);
    CHECK(std::abs(f.timings.time_per_inner_iter * f.inner_iters - f.timings.inner_wall) < 1e-9);
    CHECK(f.criterion_value == doctest::Approx(criterion_G(pr, f.theta_hat, {})).epsilon(1e-8));
  }
  SUBCASE("thread count does not change the result") {
    GmmProblem p3(d, build_weight_matrix(d, WeightKind::TwoStage), 3);
    SolverConfig c3 = cfg;
    c3.threads = 3;
    const FitResult f3 = fit_npgmm(p3, c3, sp);
    CHECK(f3.theta_hat.stacked() == f.theta_hat.stacked());
    CHECK(f3.delta_hat.delta == f.delta_hat.delta);
    CHECK(f3.outer_iters == f.outer_iters);
  }
  SUBCASE("ABLP fixed point solves the exact demand system") {
    const FitResult a = fit_ablp(pr, cfg, sp);
    REQUIRE(a.converged);
    CHECK((ablp_map(pr, a.delta_hat.delta, a.theta_hat.rc) - a.delta_hat.delta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(a.share_residual < 1e-8);
  }
  SUBCASE("NFXP minimizes G at least as well as NP-GMM, and estimates are close") {
    const FitResult n = fit_nfxp(pr, cfg, sp);
    REQUIRE(n.converged);
    CHECK(n.criterion_value <= f.criterion_value * (1.0 + 1e-8));
    const Vector gap = (sign_normalized(n.theta_hat) - sign_normalized(f.theta_hat)).cwiseAbs();
    CAPTURE(gap.transpose());
    // sigma_0 (the constant) is weakly identified and excluded
    CHECK(gap.head(K).maxCoeff() < 0.1 * std::max(1.0, f.theta_hat.beta.cwiseAbs().maxCoeff()));
    CHECK(gap.tail(K - 1).maxCoeff() < 0.1);
  }
  (void)K;
}

TEST_CASE("outer iteration limit gives a non-converged result") {
  const GeneratedData gd = small_dgp(12, 6, 100, 41);
  const MarketDataset d = reduced_instruments(gd.data);
  const GmmProblem pr(d, build_weight_matrix(d, WeightKind::TwoStage));
  SolverConfig cfg;
  cfg.max_outer = 1;
  const FitResult f = fit_npgmm(pr, cfg, random_starts(pr, 1, 3)[0]);
  CHECK(!f.converged);
  CHECK(f.outer_iters == 1);
  CHECK(f.status == "outer iteration limit reached");
}

TEST_CASE("solver config validation") {
  SolverConfig c;
  c.tol_outer = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.max_outer = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.n_starts = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  CHECK_THROWS_AS(parse_method("mpec"), InputError);
  CHECK(parse_method("ablp") == Method::Ablp);
}
