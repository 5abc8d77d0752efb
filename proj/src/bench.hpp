#pragma once

#include "io.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace blpnp {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> residuals;
};

/// OLS of log y on log x. Needs at least 3 points with positive values.
SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Timing of repeated criterion evaluations at a fixed point.
struct EvalBenchmark {
  Method method = Method::NpGmm;
  int threads = 1;
  int evaluations = 0;
  double pair_seconds = 0.0;       // (criterion, gradient) pairs
  double criterion_seconds = 0.0;  // criterion-only calls, same count
  double gradient_seconds = 0.0;   // pair minus criterion-only, floored at 0
  double value = 0.0;
  Vector gradient;
};

/// Evaluates the method's inner criterion n times with and n times without
/// the gradient: Q at lambda(start), Q^ablp at delta(start), or G.
EvalBenchmark benchmark_evaluations(const GmmProblem& problem, Method method, const StartingPoint& start,
                                    int evaluations, const InversionSettings& inversion = {});

/// One estimator run over several starts.
struct RunRecord {
  Method method = Method::NpGmm;
  std::uint64_t seed = 0;
  RunSettings settings;
  std::vector<FitResult> starts;
  FitResult selected;
  bool overall_converged = false;
  std::optional<VarianceReport> variance;
  std::string variance_error;
  double wall_clock_total = 0.0;
};

RunRecord run_estimation(const MarketDataset& data, const RunSettings& settings, Method method, std::uint64_t seed);

nlohmann::json fit_to_json(const FitResult& fit);
nlohmann::json run_to_json(const RunRecord& run);
nlohmann::json environment_json(int threads);

}  // namespace blpnp
