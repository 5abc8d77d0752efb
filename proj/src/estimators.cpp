#include "estimators.hpp"

#include "parallel.hpp"
#include "random.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace blpnp {

const char* method_name(Method m) {
  switch (m) {
    case Method::NpGmm:
      return "npgmm";
    case Method::Ablp:
      return "ablp";
    case Method::Nfxp:
      return "nfxp";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "npgmm") return Method::NpGmm;
  if (name == "ablp") return Method::Ablp;
  if (name == "nfxp") return Method::Nfxp;
  throw InputError("unknown method '" + name + "' (expected npgmm, ablp or nfxp)");
}

void SolverConfig::validate() const {
  if (!(tol_outer > 0.0)) throw InputError("tol_outer must be positive");
  if (max_outer < 1) throw InputError("max_outer must be >= 1");
  if (n_starts < 1) throw InputError("n_starts must be >= 1");
  if (threads < 1) throw InputError("threads must be >= 1");
  if (!(abort_ratio > 1.0)) throw InputError("abort_ratio must exceed 1");
  inner.validate();
  inversion.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() == 0) return 0.0;
  return (a - b).lpNorm<Eigen::Infinity>();
}

Vector solve_all(const GmmProblem& pr, const RandomCoefs& rc, const InversionSettings& settings, const Vector* start,
                 long* iterations, double* residual) {
  const MarketDataset& data = pr.data();
  const Index T = data.markets();
  Vector out(data.observations());
  std::vector<int> iters(static_cast<std::size_t>(T));
  std::vector<double> res(static_cast<std::size_t>(T));
  for_each_market(T, pr.threads(), [&](Index t) {
    std::optional<Vector> s;
    if (start) s = Vector(data.product_segment(*start, t));
    const DeltaSolve sol = solve_delta(data.log_shares(t), data.market(t), rc, settings, InversionMethod::Newton, s);
    data.product_segment(out, t) = sol.delta;
    iters[t] = sol.iterations;
    res[t] = sol.residual;
  });
  for (Index t = 0; t < T; ++t) {
    if (iterations) *iterations += iters[t];
    if (residual) *residual = std::max(*residual, res[t]);
  }
  return out;
}

double g_at(const GmmProblem& pr, const Vector& delta, const Vector& beta) {
  const Vector m = pr.scale() * (pr.data().z().transpose() * delta - pr.ztx() * beta);
  return m.dot(pr.weight() * m);
}

void finish_timings(FitResult& r, Clock::time_point t0) {
  r.timings.wall_clock_total = seconds_since(t0);
  r.timings.n_outer = r.outer_iters;
  r.timings.n_inner = r.inner_iters;
  r.timings.n_criterion_evals = r.criterion_evals;
  r.timings.time_per_inner_iter = r.inner_iters > 0 ? r.timings.inner_wall / r.inner_iters : 0.0;
  r.timings.time_per_criterion_eval = r.criterion_evals > 0 ? r.timings.inner_wall / r.criterion_evals : 0.0;
}

// Tight inversion at the final sigma, lambda from it, and G at theta_hat.
void certify(const GmmProblem& pr, const SolverConfig& cfg, FitResult& r) {
  double residual = 0.0;
  try {
    r.delta_hat.delta = solve_all(pr, r.theta_hat.rc, cfg.inversion, &r.delta_hat.delta, &r.inversion_iters, &residual);
  } catch (const Error& e) {
    r.converged = false;
    r.status = std::string("certification failed: ") + e.what();
    r.criterion_value = std::numeric_limits<double>::infinity();
    return;
  }
  r.share_residual = residual;
  r.lambda_hat.lambda = outside_probs_all(pr, r.delta_hat.delta, r.theta_hat.rc);
  r.criterion_value = g_at(pr, r.delta_hat.delta, r.theta_hat.beta);
}

// Shared outer loop of NP-GMM and ABLP. `inner` minimizes the pseudo criterion
// for the current state and `update` returns the next delta.
template <class Inner, class Update>
FitResult alternate(const GmmProblem& pr, const SolverConfig& cfg, const StartingPoint& start, Method method,
                    Inner&& inner, Update&& update) {
  cfg.validate();
  const auto t0 = Clock::now();
  FitResult r;
  r.method = method;
  r.start_index = start.index;
  r.timings.fd_gradient = method == Method::Ablp && cfg.ablp_fd_gradient;
  EstimationState state{start.delta, {}, start.theta, 0};
  double first_value = std::numeric_limits<double>::quiet_NaN();
  try {
    while (state.outer_iter < cfg.max_outer) {
      const auto ti = Clock::now();
      PseudoGmmResult step = inner(state);
      r.timings.inner_wall += seconds_since(ti);
      r.inner_iters += step.optim.iterations;
      r.criterion_evals += step.optim.evaluations;
      if (!std::isfinite(step.optim.value) || !step.theta.finite())
        throw NumericalError("pseudo-GMM minimization produced a non-finite value");
      if (std::isnan(first_value)) first_value = step.optim.value;
      if (step.optim.value > cfg.abort_ratio * std::max(first_value, 1e-12)) {
        std::ostringstream os;
        os << "aborted: inner criterion rose from " << first_value << " to " << step.optim.value;
        throw NumericalError(os.str());
      }
      EstimationState next{{update(state, step.theta.rc)}, {}, step.theta, state.outer_iter + 1};
      r.last_delta_change = max_abs_diff(next.delta.delta, state.delta.delta);
      r.last_theta_change = max_abs_diff(next.theta.stacked(), state.theta.stacked());
      const bool done = check_convergence(state, next, cfg.tol_outer);
      state = std::move(next);
      if (done) {
        r.converged = true;
        break;
      }
    }
    if (!r.converged) r.status = "outer iteration limit reached";
  } catch (const Error& e) {
    r.converged = false;
    r.status = e.what();
  }
  r.outer_iters = state.outer_iter;
  r.theta_hat = state.theta;
  r.delta_hat = state.delta;
  certify(pr, cfg, r);
  if (r.converged && r.status.empty()) r.status = "converged";
  finish_timings(r, t0);
  return r;
}

}  // namespace

Vector outside_probs_all(const GmmProblem& problem, const Vector& delta, const RandomCoefs& rc) {
  const MarketDataset& data = problem.data();
  Vector lambda(data.markets() * data.draws());
  for_each_market(data.markets(), problem.threads(), [&](Index t) {
    data.consumer_segment(lambda, t) = outside_probs(data.product_segment(delta, t), data.market(t), rc);
  });
  return lambda;
}

StartingPoint logit_start(const GmmProblem& problem) {
  const MarketDataset& data = problem.data();
  StartingPoint sp;
  sp.delta.delta.resize(data.observations());
  for (Index t = 0; t < data.markets(); ++t) data.product_segment(sp.delta.delta, t) = logit_delta(data.log_shares(t));
  sp.theta.rc = RandomCoefs::zeros(data.chars(), data.demographics());
  sp.theta.beta = linear_iv_gmm_beta(sp.delta.delta, problem);
  return sp;
}

std::vector<StartingPoint> random_starts(const GmmProblem& problem, int n_starts, std::uint64_t seed,
                                         const InversionSettings& settings) {
  if (n_starts < 1) throw InputError("n_starts must be >= 1");
  const MarketDataset& data = problem.data();
  const StartingPoint logit = logit_start(problem);
  const Vector scale = 0.5 * logit.theta.beta.cwiseAbs();
  constexpr int kMaxAttempts = 20;
  std::vector<StartingPoint> out;
  for (int s = 0; s < n_starts; ++s) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts) {
        std::ostringstream os;
        os << "could not construct start " << s << ": inversion failed on " << kMaxAttempts << " substreams";
        throw NumericalError(os.str());
      }
      Stream stream{seed, kPurposeStarts, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(attempt)};
      StartingPoint sp;
      sp.index = s;
      sp.regenerated = attempt;
      sp.theta.rc = RandomCoefs::zeros(data.chars(), data.demographics());
      for (Index k = 0; k < data.chars(); ++k) sp.theta.rc.sigma(k) = scale(k) * stream.uniform();
      try {
        sp.delta.delta = solve_all(problem, sp.theta.rc, settings, &logit.delta.delta, nullptr, nullptr);
      } catch (const Error&) {
        continue;
      }
      sp.theta.beta = linear_iv_gmm_beta(sp.delta.delta, problem);
      out.push_back(std::move(sp));
      break;
    }
  }
  return out;
}

FitResult fit_npgmm(const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start) {
  const MarketDataset& data = problem.data();
  int fallbacks = 0;
  FitResult r = alternate(
      problem, config, start, Method::NpGmm,
      [&](EstimationState& s) {
        s.lambda.lambda = outside_probs_all(problem, s.delta.delta, s.theta.rc);
        return minimize_pseudo_gmm(problem, PseudoCriterion::Q, s.lambda.lambda, s.theta.rc, config.inner);
      },
      [&](const EstimationState& s, const RandomCoefs& rc) {
        Vector next(data.observations());
        std::vector<char> fell(static_cast<std::size_t>(data.markets()), 0);
        for_each_market(data.markets(), problem.threads(), [&](Index t) {
          const auto d = data.product_segment(s.delta.delta, t);
          if (config.newton_outer) {
            NewtonStep step =
                newton_kantorovich_step(d, data.log_shares(t), data.market(t), rc, config.inversion.cond_limit);
            data.product_segment(next, t) = step.delta;
            fell[t] = step.fell_back;
          } else {
            data.product_segment(next, t) = contraction_step(d, data.log_shares(t), data.market(t), rc);
          }
        });
        for (char f : fell) fallbacks += f;
        return next;
      });
  r.nk_fallbacks = fallbacks;
  return r;
}

FitResult fit_ablp(const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start) {
  return alternate(
      problem, config, start, Method::Ablp,
      [&](EstimationState& s) {
        return minimize_pseudo_gmm(problem, PseudoCriterion::QAblp, s.delta.delta, s.theta.rc, config.inner,
                                   config.ablp_fd_gradient);
      },
      [&](const EstimationState& s, const RandomCoefs& rc) {
        return ablp_map(problem, s.delta.delta, rc, config.inversion.cond_limit);
      });
}

FitResult fit_nfxp(const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start) {
  config.validate();
  const auto t0 = Clock::now();
  const MarketDataset& data = problem.data();
  const Index K = data.chars(), R = data.demographics();
  FitResult r;
  r.method = Method::Nfxp;
  r.start_index = start.index;
  Vector warm = start.delta.delta;
  long inversion_iters = 0;
  const Objective f = [&](const Vector& x, Vector* grad) {
    int it = 0;
    CriterionEval ev = criterion_G_concentrated(problem, RandomCoefs::unpack(x, K, R), config.inversion, warm,
                                                grad != nullptr, &it);
    inversion_iters += it;
    if (grad) *grad = std::move(ev.gradient);
    return ev.value;
  };
  OptimizerSettings settings = config.inner;
  settings.step_tol = config.tol_outer;
  const auto ti = Clock::now();
  OptimResult opt;
  try {
    opt = minimize_bfgs(f, start.theta.rc.packed(), settings);
    r.converged = opt.converged;
    r.status = opt.converged ? "converged" : opt.status;
  } catch (const Error& e) {
    opt.x = start.theta.rc.packed();
    r.status = e.what();
  }
  r.timings.inner_wall = seconds_since(ti);
  r.outer_iters = opt.iterations;
  r.inner_iters = opt.iterations;
  r.criterion_evals = opt.evaluations;
  r.inversion_iters = inversion_iters;
  r.theta_hat.rc = RandomCoefs::unpack(opt.x, K, R);
  r.delta_hat.delta = warm;
  // beta concentrated at the certified delta
  double residual = 0.0;
  try {
    r.delta_hat.delta = solve_all(problem, r.theta_hat.rc, config.inversion, &warm, &r.inversion_iters, &residual);
    r.theta_hat.beta = linear_iv_gmm_beta(r.delta_hat.delta, problem);
    r.share_residual = residual;
    r.lambda_hat.lambda = outside_probs_all(problem, r.delta_hat.delta, r.theta_hat.rc);
    r.criterion_value = g_at(problem, r.delta_hat.delta, r.theta_hat.beta);
  } catch (const Error& e) {
    r.converged = false;
    r.status = std::string("certification failed: ") + e.what();
    r.theta_hat.beta = Vector::Constant(K, std::numeric_limits<double>::quiet_NaN());
    r.criterion_value = std::numeric_limits<double>::infinity();
  }
  finish_timings(r, t0);
  return r;
}

FitResult fit(Method method, const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start) {
  switch (method) {
    case Method::NpGmm:
      return fit_npgmm(problem, config, start);
    case Method::Ablp:
      return fit_ablp(problem, config, start);
    case Method::Nfxp:
      return fit_nfxp(problem, config, start);
  }
  throw InputError("unknown method");
}

bool check_convergence(const EstimationState& prev, const EstimationState& curr, double tol) {
  if (prev.delta.delta.size() != curr.delta.delta.size() || prev.theta.size() != curr.theta.size())
    throw InputError("states have mismatched dimensions");
  return max_abs_diff(prev.delta.delta, curr.delta.delta) < tol &&
         max_abs_diff(prev.theta.stacked(), curr.theta.stacked()) < tol;
}

FitResult multi_start_select(const std::vector<FitResult>& results) {
  if (results.empty()) throw InputError("no fit results to select from");
  auto key = [](const FitResult& r) {
    return std::isnan(r.criterion_value) ? std::numeric_limits<double>::infinity() : r.criterion_value;
  };
  const FitResult* best = nullptr;
  for (const auto& r : results) {
    if (!r.converged) continue;
    if (!best || key(r) < key(*best) || (key(r) == key(*best) && r.start_index < best->start_index)) best = &r;
  }
  if (best) return *best;
  for (const auto& r : results)
    if (!best || key(r) < key(*best) || (key(r) == key(*best) && r.start_index < best->start_index)) best = &r;
  FitResult out = *best;
  out.converged = false;
  return out;
}

}  // namespace blpnp
