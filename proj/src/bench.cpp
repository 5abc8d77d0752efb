#include "bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

namespace blpnp {

using json = nlohmann::json;

SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("slope fit needs matching x and y");
  if (x.size() < 3) throw InputError("slope fit needs at least 3 points");
  const Index n = static_cast<Index>(x.size());
  Matrix a(n, 2);
  Vector b(n);
  for (Index i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InputError("slope fit needs positive values");
    a(i, 0) = 1.0;
    a(i, 1) = std::log(x[i]);
    b(i) = std::log(y[i]);
  }
  const auto qr = a.colPivHouseholderQr();
  if (qr.rank() < 2) throw InputError("slope fit needs at least two distinct x values");
  const Vector coef = qr.solve(b);
  SlopeFit fit;
  fit.intercept = coef(0);
  fit.slope = coef(1);
  const Vector res = b - a * coef;
  fit.residuals.assign(res.data(), res.data() + n);
  return fit;
}

EvalBenchmark benchmark_evaluations(const GmmProblem& problem, Method method, const StartingPoint& start,
                                    int evaluations, const InversionSettings& inversion) {
  if (evaluations < 1) throw InputError("evaluations must be >= 1");
  using Clock = std::chrono::steady_clock;
  EvalBenchmark out;
  out.method = method;
  out.threads = problem.threads();
  out.evaluations = evaluations;
  const RandomCoefs& rc = start.theta.rc;
  Vector lambda;
  if (method == Method::NpGmm) lambda = outside_probs_all(problem, start.delta.delta, rc);
  Vector warm = start.delta.delta;
  auto eval = [&](bool grad) {
    switch (method) {
      case Method::NpGmm:
        return criterion_Q_concentrated(problem, lambda, rc, grad);
      case Method::Ablp:
        return criterion_Q_ablp_concentrated(problem, start.delta.delta, rc, grad);
      case Method::Nfxp: {
        Vector w = warm;
        return criterion_G_concentrated(problem, rc, inversion, w, grad);
      }
    }
    throw InputError("unknown method");
  };
  auto t0 = Clock::now();
  CriterionEval last;
  for (int i = 0; i < evaluations; ++i) last = eval(false);
  out.criterion_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  t0 = Clock::now();
  for (int i = 0; i < evaluations; ++i) last = eval(true);
  out.pair_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  out.gradient_seconds = std::max(0.0, out.pair_seconds - out.criterion_seconds);
  out.value = last.value;
  out.gradient = last.gradient;
  return out;
}

RunRecord run_estimation(const MarketDataset& data, const RunSettings& settings, Method method, std::uint64_t seed) {
  settings.solver.validate();
  const auto t0 = std::chrono::steady_clock::now();
  data.require_order_condition();
  RunRecord run;
  run.method = method;
  run.seed = seed;
  run.settings = settings;
  GmmProblem problem(data, build_weight_matrix(data, settings.weight), settings.solver.threads);
  const auto starts = random_starts(problem, settings.solver.n_starts, seed, settings.solver.inversion);
  for (const auto& s : starts) run.starts.push_back(fit(method, problem, settings.solver, s));
  run.selected = multi_start_select(run.starts);
  run.overall_converged = run.selected.converged;
  if (method == Method::NpGmm && run.overall_converged) {
    try {
      VarianceOptions opt;
      opt.kind = settings.variance;
      run.variance = npgmm_variance(run.selected, problem, opt);
    } catch (const Error& e) {
      run.variance_error = e.what();
    }
  }
  run.wall_clock_total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

namespace {

json vec(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json mat(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("model name", 0) == 0) {
      const auto c = line.find(':');
      if (c != std::string::npos) return line.substr(c + 2);
    }
  return "unknown";
}

}  // namespace

json fit_to_json(const FitResult& f) {
  json t;
  t["wall_clock_total"] = f.timings.wall_clock_total;
  t["inner_wall"] = f.timings.inner_wall;
  t["time_per_inner_iter"] = f.timings.time_per_inner_iter;
  t["time_per_criterion_eval"] = f.timings.time_per_criterion_eval;
  t["n_outer"] = f.timings.n_outer;
  t["n_inner"] = f.timings.n_inner;
  t["n_criterion_evals"] = f.timings.n_criterion_evals;
  t["fd_gradient"] = f.timings.fd_gradient;
  json j;
  j["method"] = method_name(f.method);
  j["start_index"] = f.start_index;
  j["converged"] = f.converged;
  j["status"] = f.status;
  j["criterion_value"] = f.criterion_value;
  j["beta"] = vec(f.theta_hat.beta);
  j["sigma"] = vec(f.theta_hat.rc.sigma);
  j["pi"] = mat(f.theta_hat.rc.pi);
  j["theta"] = vec(f.theta_hat.stacked());
  j["outer_iters"] = f.outer_iters;
  j["inner_iters"] = f.inner_iters;
  j["criterion_evals"] = f.criterion_evals;
  j["inversion_iters"] = f.inversion_iters;
  j["nk_fallbacks"] = f.nk_fallbacks;
  j["share_residual"] = f.share_residual;
  j["last_delta_change"] = f.last_delta_change;
  j["last_theta_change"] = f.last_theta_change;
  j["timings"] = t;
  return j;
}

json environment_json(int threads) {
  json e;
  e["threads"] = threads;
  e["hardware_concurrency"] = std::thread::hardware_concurrency();
  e["cpu"] = cpu_model();
  return e;
}

json run_to_json(const RunRecord& run) {
  json j;
  j["method"] = method_name(run.method);
  j["seed"] = run.seed;
  const SolverConfig& c = run.settings.solver;
  j["config"] = {{"tol_outer", c.tol_outer},
                 {"max_outer", c.max_outer},
                 {"n_starts", c.n_starts},
                 {"threads", c.threads},
                 {"grad_tol", c.inner.grad_tol},
                 {"inner_max_iter", c.inner.max_iter},
                 {"tol_delta", c.inversion.tol_delta},
                 {"cond_limit", c.inversion.cond_limit},
                 {"newton_outer", c.newton_outer},
                 {"ablp_fd_gradient", c.ablp_fd_gradient},
                 {"weight", weight_kind_name(run.settings.weight)},
                 {"variance", omega_kind_name(run.settings.variance)}};
  j["environment"] = environment_json(c.threads);
  j["starts"] = json::array();
  for (const auto& s : run.starts) j["starts"].push_back(fit_to_json(s));
  j["selected"] = fit_to_json(run.selected);
  j["overall_converged"] = run.overall_converged;
  j["wall_clock_total"] = run.wall_clock_total;
  if (run.variance) {
    const VarianceReport& v = *run.variance;
    j["variance"] = {{"kind", omega_kind_name(v.kind)},   {"se_np", vec(v.se_np)},
                     {"se_gmm", vec(v.se_gmm)},           {"v_np", mat(v.v_np)},
                     {"v_gmm", mat(v.v_gmm)},             {"gradient_identity_error", v.gradient_identity_error}};
  } else if (!run.variance_error.empty()) {
    j["variance_error"] = run.variance_error;
  }
  return j;
}

}  // namespace blpnp
