#pragma once

#include "gmm.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace blpnp {

enum class Method { NpGmm, Ablp, Nfxp };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct SolverConfig {
  double tol_outer = 1e-6;
  int max_outer = 100;
  int n_starts = 5;
  OptimizerSettings inner;
  InversionSettings inversion;
  int threads = 1;
  bool newton_outer = true;       // NP-GMM outer update: Newton-Kantorovich, or a contraction step
  bool ablp_fd_gradient = false;  // forward differences for the ABLP inner gradient
  double abort_ratio = 10.0;      // abandon a start once the inner criterion exceeds this multiple of its first value

  void validate() const;
};

struct EstimationState {
  MeanUtilities delta;
  OutsideProbs lambda;
  ModelParameters theta;
  int outer_iter = 0;
};

/// Wall-clock decomposition of one fit. Inner time covers the pseudo-GMM
/// minimizations (NP-GMM, ABLP) or the whole quasi-Newton search (NFXP).
struct TimingPanels {
  double wall_clock_total = 0.0;
  double inner_wall = 0.0;
  double time_per_inner_iter = 0.0;
  double time_per_criterion_eval = 0.0;
  long n_outer = 0;
  long n_inner = 0;
  long n_criterion_evals = 0;
  bool fd_gradient = false;
};

struct StartingPoint {
  MeanUtilities delta;
  ModelParameters theta;
  int index = 0;
  int regenerated = 0;  // substreams skipped because the inversion failed
};

struct FitResult {
  Method method = Method::NpGmm;
  ModelParameters theta_hat;
  MeanUtilities delta_hat;
  OutsideProbs lambda_hat;
  double criterion_value = 0.0;  // G at theta_hat
  bool converged = false;
  int outer_iters = 0;
  int inner_iters = 0;
  int criterion_evals = 0;
  long inversion_iters = 0;  // Newton iterations of full inversions
  int nk_fallbacks = 0;      // outer Newton steps replaced by contraction steps
  double share_residual = 0.0;  // max |ln s - ln s(delta_hat)| after certification
  double last_delta_change = 0.0;
  double last_theta_change = 0.0;
  TimingPanels timings;
  int start_index = 0;
  std::string status;
};

/// delta0 = ln s - ln s0, zero random coefficients, beta by linear IV-GMM.
StartingPoint logit_start(const GmmProblem& problem);

/// sigma0_k = 0.5 |beta_logit_k| U_k, pi0 = 0, delta0 solved at sigma0.
std::vector<StartingPoint> random_starts(const GmmProblem& problem, int n_starts, std::uint64_t seed,
                                         const InversionSettings& settings = {});

FitResult fit_npgmm(const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start);
FitResult fit_ablp(const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start);
FitResult fit_nfxp(const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start);
FitResult fit(Method method, const GmmProblem& problem, const SolverConfig& config, const StartingPoint& start);

/// Both infinity-norm changes strictly below tol.
bool check_convergence(const EstimationState& prev, const EstimationState& curr, double tol);

/// Lowest criterion among converged results, ties to the lowest start index.
/// With no converged result, returns the lowest-criterion one (converged = false).
FitResult multi_start_select(const std::vector<FitResult>& results);

/// Outside probabilities for every market at (delta, sigma).
Vector outside_probs_all(const GmmProblem& problem, const Vector& delta, const RandomCoefs& rc);

}  // namespace blpnp
