#include "blpnp/blpnp.h"

#include "bench.hpp"
#include "dgp.hpp"

#include <cstring>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

using namespace blpnp;

struct blpnp_dataset {
  std::unique_ptr<MarketDataset> data;
  std::optional<ModelParameters> truth;
};

struct blpnp_config {
  RunSettings settings;
};

struct blpnp_run {
  RunRecord record;
};

namespace {

thread_local std::string last_error;

blpnp_status fail(blpnp_status s, const std::string& msg) {
  last_error = msg;
  return s;
}

template <class F>
blpnp_status guarded(F&& fn) {
  try {
    fn();
    last_error.clear();
    return BLPNP_OK;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::Input:
        return fail(BLPNP_ERR_INPUT, e.what());
      case ErrorKind::Numerical:
        return fail(BLPNP_ERR_NUMERICAL, e.what());
      case ErrorKind::Convergence:
        return fail(BLPNP_ERR_CONVERGENCE, e.what());
    }
    return fail(BLPNP_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(BLPNP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(BLPNP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(BLPNP_ERR_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

DgpConfig parse_dgp(const char* settings, std::uint64_t seed) {
  DgpConfig cfg;
  cfg.seed = seed;
  if (!settings) return cfg;
  std::string text(settings);
  for (char& c : text)
    if (c == ';') c = '\n';
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw InputError("DGP setting '" + line + "' is not key=value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
    };
    strip(key);
    strip(value);
    if (key == "J") cfg.J = parse_long(value, key);
    else if (key == "T") cfg.T = parse_long(value, key);
    else if (key == "N") cfg.N = parse_long(value, key);
    else if (key == "zero_xi") cfg.zero_xi = value == "1" || value == "true";
    else throw InputError("unknown DGP setting '" + key + "'");
  }
  return cfg;
}

}  // namespace

extern "C" {

const char* blpnp_last_error(void) { return last_error.c_str(); }

const char* blpnp_version(void) { return "1.0.0"; }

void blpnp_string_free(char* s) { std::free(s); }

blpnp_status blpnp_dataset_load(const char* products_csv, const char* draws_csv, blpnp_dataset** out) {
  if (!products_csv || !draws_csv || !out) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    auto ds = std::make_unique<blpnp_dataset>();
    ds->data = std::make_unique<MarketDataset>(load_dataset(products_csv, draws_csv));
    *out = ds.release();
  });
}

blpnp_status blpnp_dataset_generate(const char* settings, uint64_t seed, blpnp_dataset** out) {
  if (!out) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    GeneratedData g = generate_dataset(parse_dgp(settings, seed));
    auto ds = std::make_unique<blpnp_dataset>();
    ds->data = std::make_unique<MarketDataset>(std::move(g.data));
    ds->truth = std::move(g.truth);
    *out = ds.release();
  });
}

blpnp_status blpnp_dataset_save(const blpnp_dataset* ds, const char* products_csv, const char* draws_csv) {
  if (!ds || !products_csv || !draws_csv) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] { save_dataset(*ds->data, products_csv, draws_csv); });
}

blpnp_status blpnp_dataset_dims(const blpnp_dataset* ds, int64_t dims[6]) {
  if (!ds || !dims) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  const MarketDataset& d = *ds->data;
  dims[0] = d.markets();
  dims[1] = d.products();
  dims[2] = d.chars();
  dims[3] = d.instruments();
  dims[4] = d.draws();
  dims[5] = d.demographics();
  last_error.clear();
  return BLPNP_OK;
}

blpnp_status blpnp_dataset_truth(const blpnp_dataset* ds, double* theta, size_t len) {
  if (!ds || !theta) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  if (!ds->truth) return fail(BLPNP_ERR_INPUT, "dataset was not simulated; no true parameters");
  const Vector v = ds->truth->stacked();
  if (len < static_cast<size_t>(v.size())) return fail(BLPNP_ERR_INPUT, "output buffer too small");
  std::copy(v.data(), v.data() + v.size(), theta);
  last_error.clear();
  return BLPNP_OK;
}

void blpnp_dataset_free(blpnp_dataset* ds) { delete ds; }

blpnp_status blpnp_config_create(blpnp_config** out) {
  if (!out) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] { *out = new blpnp_config(); });
}

blpnp_status blpnp_config_set(blpnp_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    RunSettings trial = cfg->settings;
    apply_setting(trial, key, value);
    trial.solver.validate();
    cfg->settings = trial;
  });
}

blpnp_status blpnp_config_load(blpnp_config* cfg, const char* path) {
  if (!cfg || !path) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    RunSettings trial = cfg->settings;
    load_config(trial, path);
    cfg->settings = trial;
  });
}

void blpnp_config_free(blpnp_config* cfg) { delete cfg; }

blpnp_status blpnp_estimate(const blpnp_dataset* ds, const blpnp_config* cfg, const char* method, uint64_t seed,
                            blpnp_run** out) {
  if (!ds || !cfg || !method || !out) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    auto run = std::make_unique<blpnp_run>();
    run->record = run_estimation(*ds->data, cfg->settings, parse_method(method), seed);
    *out = run.release();
  });
}

blpnp_status blpnp_run_converged(const blpnp_run* run, int* converged) {
  if (!run || !converged) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  *converged = run->record.overall_converged ? 1 : 0;
  last_error.clear();
  return BLPNP_OK;
}

blpnp_status blpnp_run_theta(const blpnp_run* run, double* theta, size_t len) {
  if (!run || !theta) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  const Vector v = run->record.selected.theta_hat.stacked();
  if (len < static_cast<size_t>(v.size())) return fail(BLPNP_ERR_INPUT, "output buffer too small");
  std::copy(v.data(), v.data() + v.size(), theta);
  last_error.clear();
  return BLPNP_OK;
}

blpnp_status blpnp_run_json(const blpnp_run* run, char** json) {
  if (!run || !json) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] { *json = dup(run_to_json(run->record).dump()); });
}

void blpnp_run_free(blpnp_run* run) { delete run; }

blpnp_status blpnp_eval_benchmark(const blpnp_dataset* ds, const blpnp_config* cfg, const char* method, uint64_t seed,
                                  int evaluations, int threads, char** json) {
  if (!ds || !cfg || !method || !json) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    if (threads < 1) throw InputError("threads must be >= 1");
    const MarketDataset& data = *ds->data;
    GmmProblem problem(data, build_weight_matrix(data, cfg->settings.weight), threads);
    const auto starts = random_starts(problem, 1, seed, cfg->settings.solver.inversion);
    const Method m = parse_method(method);
    const EvalBenchmark b = benchmark_evaluations(problem, m, starts.front(), evaluations, cfg->settings.solver.inversion);
    nlohmann::json j;
    j["method"] = method_name(m);
    j["threads"] = b.threads;
    j["evaluations"] = b.evaluations;
    j["pair_seconds"] = b.pair_seconds;
    j["criterion_seconds"] = b.criterion_seconds;
    j["gradient_seconds"] = b.gradient_seconds;
    j["value"] = b.value;
    j["gradient"] = std::vector<double>(b.gradient.data(), b.gradient.data() + b.gradient.size());
    *json = dup(j.dump());
  });
}

blpnp_status blpnp_loglog_slope(const double* x, const double* y, size_t n, double* slope, double* intercept,
                                double* residuals) {
  if (!x || !y || !slope || !intercept) return fail(BLPNP_ERR_NULL_ARG, "null argument");
  return guarded([&] {
    const SlopeFit f = loglog_slope(std::vector<double>(x, x + n), std::vector<double>(y, y + n));
    *slope = f.slope;
    *intercept = f.intercept;
    if (residuals) std::copy(f.residuals.begin(), f.residuals.end(), residuals);
  });
}

}  // extern "C"
