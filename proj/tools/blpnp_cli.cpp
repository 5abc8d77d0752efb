#include "blpnp/blpnp.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kInput = 2, kNoConvergence = 3, kNumerical = 4 };

struct Failure {
  blpnp_status status;
  std::string message;
};

void check(blpnp_status s) {
  if (s != BLPNP_OK) throw Failure{s, blpnp_last_error()};
}

int exit_code(blpnp_status s) {
  switch (s) {
    case BLPNP_ERR_INPUT:
      return kInput;
    case BLPNP_ERR_NUMERICAL:
      return kNumerical;
    case BLPNP_ERR_CONVERGENCE:
      return kNoConvergence;
    default:
      return kOther;
  }
}

struct DatasetFree {
  void operator()(blpnp_dataset* d) const { blpnp_dataset_free(d); }
};
struct ConfigFree {
  void operator()(blpnp_config* c) const { blpnp_config_free(c); }
};
struct RunFree {
  void operator()(blpnp_run* r) const { blpnp_run_free(r); }
};
using Dataset = std::unique_ptr<blpnp_dataset, DatasetFree>;
using Config = std::unique_ptr<blpnp_config, ConfigFree>;
using Run = std::unique_ptr<blpnp_run, RunFree>;

std::string take(char* s) {
  std::string out(s);
  blpnp_string_free(s);
  return out;
}

struct Dims {
  int64_t T, J, K, q, N, R;
};

Dims dims(const blpnp_dataset* d) {
  int64_t v[6];
  check(blpnp_dataset_dims(d, v));
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

std::vector<std::string> parameter_names(const Dims& d) {
  std::vector<std::string> names;
  for (int64_t k = 0; k < d.K; ++k) names.push_back("beta_" + std::to_string(k));
  for (int64_t k = 0; k < d.K; ++k) names.push_back("sigma_" + std::to_string(k));
  for (int64_t k = 0; k < d.K; ++k)
    for (int64_t r = 0; r < d.R; ++r) names.push_back("pi_" + std::to_string(k) + "_" + std::to_string(r));
  return names;
}

bool is_sigma(const std::string& name) { return name.rfind("sigma_", 0) == 0; }

std::vector<double> sign_normalized(const json& theta, const std::vector<std::string>& names) {
  auto th = theta.get<std::vector<double>>();
  for (std::size_t i = 0; i < th.size(); ++i)
    if (is_sigma(names[i])) th[i] = std::abs(th[i]);
  return th;
}

Dataset generate(int J, int T, int N, uint64_t seed) {
  std::ostringstream s;
  s << "J=" << J << ";T=" << T << ";N=" << N;
  blpnp_dataset* d = nullptr;
  check(blpnp_dataset_generate(s.str().c_str(), seed, &d));
  return Dataset(d);
}

std::vector<double> truth(const blpnp_dataset* d) {
  const Dims dm = dims(d);
  std::vector<double> t(static_cast<std::size_t>(2 * dm.K + dm.K * dm.R));
  check(blpnp_dataset_truth(d, t.data(), t.size()));
  return t;
}

// Options shared by the estimation subcommands.
struct Common {
  std::optional<std::string> config;
  uint64_t seed = 1;
  std::optional<int> starts;
  int threads = static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u));
  std::optional<double> tol_outer;
  std::optional<int> max_outer;
  std::optional<std::string> weight;
  std::vector<std::string> set;
  std::string out_dir = ".";

  void add(CLI::App* app) {
    app->add_option("--config", config, "key=value solver settings file")->envname("BLPNP_CONFIG");
    app->add_option("--seed", seed, "seed for starting values and simulated data")->envname("BLPNP_SEED");
    app->add_option("--starts", starts, "starting values per estimation")->envname("BLPNP_STARTS");
    app->add_option("--threads", threads, "threads for per-market work")->envname("BLPNP_THREADS");
    app->add_option("--tol-outer", tol_outer, "outer convergence tolerance")->envname("BLPNP_TOL_OUTER");
    app->add_option("--max-outer", max_outer, "outer iteration limit")->envname("BLPNP_MAX_OUTER");
    app->add_option("--weight", weight, "GMM weight: two-stage or identity")->envname("BLPNP_WEIGHT");
    app->add_option("--set", set, "extra solver setting key=value (repeatable)")->envname("BLPNP_SET");
    app->add_option("--out-dir", out_dir, "directory for report files")->envname("BLPNP_OUT_DIR");
  }

  Config build() const {
    blpnp_config* c = nullptr;
    check(blpnp_config_create(&c));
    Config cfg(c);
    if (config) check(blpnp_config_load(c, config->c_str()));
    auto put = [&](const char* key, const std::string& v) { check(blpnp_config_set(c, key, v.c_str())); };
    if (starts) put("n_starts", std::to_string(*starts));
    put("threads", std::to_string(threads));
    if (tol_outer) {
      std::ostringstream s;
      s.precision(17);
      s << *tol_outer;
      put("tol_outer", s.str());
    }
    if (max_outer) put("max_outer", std::to_string(*max_outer));
    if (weight) put("weight", *weight);
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Failure{BLPNP_ERR_INPUT, "--set expects key=value, got '" + kv + "'"};
      put(kv.substr(0, eq).c_str(), kv.substr(eq + 1));
    }
    return cfg;
  }
};

std::vector<std::string> methods_from(const std::string& m) {
  if (m == "all") return {"npgmm", "ablp", "nfxp"};
  if (m == "npgmm" || m == "ablp" || m == "nfxp") return {m};
  throw Failure{BLPNP_ERR_INPUT, "unknown method '" + m + "' (expected npgmm, ablp, nfxp or all)"};
}

json estimate(const blpnp_dataset* d, const blpnp_config* c, const std::string& method, uint64_t seed) {
  blpnp_run* r = nullptr;
  check(blpnp_estimate(d, c, method.c_str(), seed, &r));
  Run run(r);
  char* s = nullptr;
  check(blpnp_run_json(r, &s));
  return json::parse(take(s));
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw Failure{BLPNP_ERR_INPUT, "cannot write " + p.string()};
  out << text;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{BLPNP_ERR_INPUT, "cannot create output directory " + dir + ": " + ec.message()};
  return fs::path(dir);
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string panels(const std::vector<std::string>& labels, const std::vector<json>& timings) {
  std::ostringstream o;
  auto row = [&](const char* panel, const char* name, const char* key, int prec) {
    o << "  Panel " << panel << "  " << name;
    for (std::size_t i = 0; i < timings.size(); ++i) {
      const json& t = timings[i];
      o << "  " << labels[i] << "=" << (t[key].is_number_float() ? fmt(t[key].get<double>(), prec) : t[key].dump());
    }
    o << "\n";
  };
  row("A", "wall-clock time (s)         ", "wall_clock_total", 3);
  row("B", "time per inner iteration (s)", "time_per_inner_iter", 5);
  row("C", "time per crit. fun. eval (s)", "time_per_criterion_eval", 5);
  row("D", "outer iterations            ", "n_outer", 0);
  row("E", "inner iterations            ", "n_inner", 0);
  row("F", "criterion evaluations       ", "n_criterion_evals", 0);
  return o.str();
}

std::string run_text(const json& run, const std::vector<std::string>& names) {
  std::ostringstream o;
  const json& sel = run["selected"];
  o << "== " << run["method"].get<std::string>() << " ==\n";
  o << "starts: " << run["starts"].size() << ", selected start " << sel["start_index"] << ", overall converged "
    << (run["overall_converged"].get<bool>() ? "yes" : "no") << "\n";
  for (const auto& s : run["starts"])
    o << "  start " << s["start_index"] << ": " << s["status"].get<std::string>() << ", G = " << s["criterion_value"]
      << ", outer " << s["outer_iters"] << ", inner " << s["inner_iters"] << ", " << fmt(s["timings"]["wall_clock_total"], 3)
      << " s\n";
  o << "criterion value G = " << sel["criterion_value"] << ", share residual " << sel["share_residual"] << "\n";
  const auto theta = sel["theta"].get<std::vector<double>>();
  std::vector<double> se;
  if (run.contains("variance")) se = run["variance"]["se_np"].get<std::vector<double>>();
  o << "  parameter      estimate" << (se.empty() ? "" : "      std.err") << "\n";
  for (std::size_t i = 0; i < theta.size(); ++i) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %-12s %10.4f", names[i].c_str(), theta[i]);
    o << buf;
    if (!se.empty()) {
      std::snprintf(buf, sizeof buf, "   %10.4f", se[i]);
      o << buf;
    }
    o << "\n";
  }
  if (run.contains("variance_error")) o << "variance not available: " << run["variance_error"].get<std::string>() << "\n";
  o << panels({run["method"].get<std::string>()}, {sel["timings"]});
  return o.str();
}

// ---- estimate ----

struct EstimateArgs {
  Common common;
  std::string method = "npgmm";
  std::string data, draws;
};

int cmd_estimate(const EstimateArgs& a) {
  const auto methods = methods_from(a.method);
  blpnp_dataset* raw = nullptr;
  check(blpnp_dataset_load(a.data.c_str(), a.draws.c_str(), &raw));
  Dataset d(raw);
  Config cfg = a.common.build();
  const auto names = parameter_names(dims(d.get()));
  const fs::path out = ensure_dir(a.common.out_dir);
  json report;
  report["command"] = "estimate";
  report["data"] = a.data;
  report["draws"] = a.draws;
  report["runs"] = json::array();
  std::string text;
  bool all_ok = true;
  for (const auto& m : methods) {
    json run = estimate(d.get(), cfg.get(), m, a.common.seed);
    all_ok = all_ok && run["overall_converged"].get<bool>();
    text += run_text(run, names) + "\n";
    report["runs"].push_back(std::move(run));
  }
  if (methods.size() > 1) {
    // sigma compared in absolute value: its sign is not identified
    double gap = 0.0;
    const auto ref = sign_normalized(report["runs"][0]["selected"]["theta"], names);
    for (const auto& r : report["runs"]) {
      const auto th = sign_normalized(r["selected"]["theta"], names);
      for (std::size_t i = 0; i < th.size(); ++i) gap = std::max(gap, std::abs(th[i] - ref[i]));
    }
    report["max_cross_method_gap"] = gap;
    text += "max |theta difference| across methods (|sigma|): " + fmt(gap, 4) + "\n";
  }
  write_file(out / "estimate_report.json", report.dump(2));
  write_file(out / "estimate_report.txt", text);
  std::cout << text;
  return all_ok ? kOk : kNoConvergence;
}

// ---- montecarlo ----

struct MonteCarloArgs {
  Common common;
  int replications = 20;
  int J = 25, T = 50, N = 1000;
};

struct Moments {
  double mean = 0, std = 0, bias = 0, rmse = 0;
};

Moments moments(const std::vector<double>& v, double truth) {
  Moments m;
  if (v.empty()) return {NAN, NAN, NAN, NAN};
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  double ss = 0, sq = 0;
  for (double x : v) {
    ss += (x - m.mean) * (x - m.mean);
    sq += (x - truth) * (x - truth);
  }
  m.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  m.bias = m.mean - truth;
  m.rmse = std::sqrt(sq / static_cast<double>(v.size()));
  return m;
}

int cmd_montecarlo(const MonteCarloArgs& a) {
  if (a.replications < 1) throw Failure{BLPNP_ERR_INPUT, "replications must be >= 1"};
  Config cfg = a.common.build();
  const fs::path out = ensure_dir(a.common.out_dir);
  const std::vector<std::string> methods{"npgmm", "ablp"};
  std::ofstream csv(out / "montecarlo_replications.csv");
  if (!csv) throw Failure{BLPNP_ERR_INPUT, "cannot write montecarlo_replications.csv"};
  csv.precision(17);

  std::vector<std::string> names;
  std::vector<double> truth_v;
  json reps = json::array();
  // estimates[method][param] over converged replications
  std::vector<std::vector<std::vector<double>>> est(methods.size());
  std::vector<int> ds_conv(methods.size(), 0), start_conv(methods.size(), 0), start_total(methods.size(), 0);
  std::vector<std::vector<json>> timing(methods.size());
  for (int r = 0; r < a.replications; ++r) {
    const uint64_t data_seed = a.common.seed * 1000003ULL + static_cast<uint64_t>(r);
    json rep;
    rep["replication"] = r;
    rep["data_seed"] = data_seed;
    Dataset d;
    try {
      d = generate(a.J, a.T, a.N, data_seed);
    } catch (const Failure& f) {
      rep["error"] = f.message;
      reps.push_back(rep);
      continue;
    }
    if (names.empty()) {
      names = parameter_names(dims(d.get()));
      truth_v = truth(d.get());
      for (auto& e : est) e.assign(names.size(), {});
      csv << "replication,method,converged,starts_converged,starts";
      for (const auto& n : names) csv << "," << n;
      for (const auto& n : names) csv << ",true_" << n;
      csv << ",wall_clock_total,time_per_inner_iter,time_per_criterion_eval,n_outer,n_inner,n_criterion_evals\n";
    }
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      json run;
      try {
        run = estimate(d.get(), cfg.get(), methods[mi], data_seed);
      } catch (const Failure& f) {
        rep[methods[mi]] = {{"error", f.message}};
        csv << r << "," << methods[mi] << ",0,0,0";
        for (std::size_t i = 0; i < 2 * names.size() + 6; ++i) csv << ",";
        csv << "\n";
        continue;
      }
      int nconv = 0;
      for (const auto& s : run["starts"]) nconv += s["converged"].get<bool>() ? 1 : 0;
      const bool ok = run["overall_converged"].get<bool>();
      ds_conv[mi] += ok;
      start_conv[mi] += nconv;
      start_total[mi] += static_cast<int>(run["starts"].size());
      const json& sel = run["selected"];
      const auto th = sel["theta"].get<std::vector<double>>();
      if (ok)
        for (std::size_t i = 0; i < th.size(); ++i) est[mi][i].push_back(is_sigma(names[i]) ? std::abs(th[i]) : th[i]);
      timing[mi].push_back(sel["timings"]);
      csv << r << "," << methods[mi] << "," << ok << "," << nconv << "," << run["starts"].size();
      for (double v : th) csv << "," << v;
      for (double v : truth_v) csv << "," << v;
      const json& t = sel["timings"];
      csv << "," << t["wall_clock_total"].get<double>() << "," << t["time_per_inner_iter"].get<double>() << ","
          << t["time_per_criterion_eval"].get<double>() << "," << t["n_outer"] << "," << t["n_inner"] << ","
          << t["n_criterion_evals"] << "\n";
      rep[methods[mi]] = std::move(run);
    }
    csv.flush();
    reps.push_back(std::move(rep));
  }

  json summary = json::object();
  std::ostringstream text;
  text << "Monte Carlo: " << a.replications << " replications, J=" << a.J << ", T=" << a.T << ", N=" << a.N << "\n";
  text << "summaries over converged replications; sigma summarised in absolute value\n";
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    json s;
    const double n = static_cast<double>(a.replications);
    s["convergence_rate_dataset"] = 100.0 * ds_conv[mi] / n;
    s["convergence_rate_dataset_start"] = start_total[mi] > 0 ? 100.0 * start_conv[mi] / start_total[mi] : 0.0;
    json params = json::array();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const Moments m = moments(est[mi][i], truth_v[i]);
      params.push_back({{"name", names[i]}, {"truth", truth_v[i]}, {"mean", m.mean}, {"std", m.std}, {"bias", m.bias},
                        {"rmse", m.rmse}, {"n", est[mi][i].size()}});
    }
    s["parameters"] = params;
    json mean_t = json::object();
    for (const char* key : {"wall_clock_total", "time_per_inner_iter", "time_per_criterion_eval", "n_outer", "n_inner",
                            "n_criterion_evals"}) {
      double acc = 0;
      for (const auto& t : timing[mi]) acc += t[key].get<double>();
      mean_t[key] = timing[mi].empty() ? 0.0 : acc / static_cast<double>(timing[mi].size());
    }
    s["mean_timings"] = mean_t;
    summary[methods[mi]] = s;

    text << "\n== " << methods[mi] << " ==\n";
    text << "convergence rate (%): dataset level " << fmt(s["convergence_rate_dataset"], 1) << ", dataset-start level "
         << fmt(s["convergence_rate_dataset_start"], 1) << "\n";
    text << "  parameter        true      mean       std      bias      rmse\n";
    for (const auto& p : params) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-12s %8.4f  %8.4f  %8.4f  %8.4f  %8.4f\n", p["name"].get<std::string>().c_str(),
                    p["truth"].get<double>(), p["mean"].get<double>(), p["std"].get<double>(), p["bias"].get<double>(),
                    p["rmse"].get<double>());
      text << buf;
    }
  }
  if (!timing[0].empty()) {
    std::vector<json> t;
    for (const auto& m : methods) t.push_back(summary[m]["mean_timings"]);
    text << "\nmean timing panels\n" << panels(methods, t);
  }
  json report{{"command", "montecarlo"}, {"replications", a.replications}, {"J", a.J}, {"T", a.T}, {"N", a.N},
              {"seed", a.common.seed}, {"sigma_summary", "absolute value"}, {"summary", summary}, {"per_replication", reps}};
  write_file(out / "montecarlo_report.json", report.dump(2));
  write_file(out / "montecarlo_report.txt", text.str());
  std::cout << text.str();
  return kOk;
}

// ---- thread-sweep ----

struct SweepArgs {
  Common common;
  std::string method = "all";
  std::vector<int> threads{1, 2, 3, 4, 5, 6};
  int evaluations = 1000;
  int J = 25, T = 100, N = 1000;
  std::optional<std::string> data, draws;
};

Dataset dataset_for(const std::optional<std::string>& data, const std::optional<std::string>& draws, int J, int T,
                    int N, uint64_t seed) {
  if (data.has_value() != draws.has_value())
    throw Failure{BLPNP_ERR_INPUT, "--data and --draws must be given together"};
  if (data) {
    blpnp_dataset* raw = nullptr;
    check(blpnp_dataset_load(data->c_str(), draws->c_str(), &raw));
    return Dataset(raw);
  }
  return generate(J, T, N, seed);
}

int cmd_sweep(const SweepArgs& a) {
  if (a.threads.empty()) throw Failure{BLPNP_ERR_INPUT, "thread list is empty"};
  std::vector<std::string> methods = methods_from(a.method);
  Dataset d = dataset_for(a.data, a.draws, a.J, a.T, a.N, a.common.seed);
  Config cfg = a.common.build();
  const fs::path out = ensure_dir(a.common.out_dir);
  json report{{"command", "thread-sweep"}, {"evaluations", a.evaluations}, {"methods", json::object()}};
  std::ostringstream text;
  text << "Thread sweep: " << a.evaluations << " evaluations of (criterion, gradient) per thread count\n";
  bool identical = true;
  for (const auto& m : methods) {
    json rows = json::array();
    json first;
    double best = INFINITY;
    int best_threads = 0;
    text << "\n== " << m << " ==\n  threads   total (s)   criterion (s)   gradient (s)\n";
    for (int t : a.threads) {
      char* s = nullptr;
      check(blpnp_eval_benchmark(d.get(), cfg.get(), m.c_str(), a.common.seed, a.evaluations, t, &s));
      json row = json::parse(take(s));
      if (first.is_null()) first = row;
      const bool same = row["value"] == first["value"] && row["gradient"] == first["gradient"];
      identical = identical && same;
      row["identical_to_first"] = same;
      const double total = row["pair_seconds"].get<double>();
      if (total < best) {
        best = total;
        best_threads = t;
      }
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %7d   %9.3f   %13.3f   %12.3f%s\n", t, total, row["criterion_seconds"].get<double>(),
                    row["gradient_seconds"].get<double>(), same ? "" : "   (values differ!)");
      text << buf;
      rows.push_back(std::move(row));
    }
    text << "  optimal number of threads: " << best_threads << "\n";
    report["methods"][m] = {{"rows", rows}, {"optimal_threads", best_threads}};
  }
  report["bit_identical"] = identical;
  report["hardware_concurrency"] = std::thread::hardware_concurrency();
  write_file(out / "thread_sweep.json", report.dump(2));
  write_file(out / "thread_sweep.txt", text.str());
  std::cout << text.str();
  return identical ? kOk : kNumerical;
}

// ---- scaling ----

struct ScalingArgs {
  Common common;
  std::vector<int> js{25, 50, 100};
  int T = 50, N = 1000;
  int datasets = 1;
};

int cmd_scaling(const ScalingArgs& a) {
  if (a.js.size() < 3) throw Failure{BLPNP_ERR_INPUT, "scaling needs at least 3 J values to fit a slope"};
  if (a.datasets < 1) throw Failure{BLPNP_ERR_INPUT, "datasets must be >= 1"};
  Config cfg = a.common.build();
  const fs::path out = ensure_dir(a.common.out_dir);
  const std::vector<std::string> methods{"npgmm", "ablp"};
  json per_j = json::array();
  std::vector<std::vector<double>> tpi(methods.size());
  std::ostringstream text;
  text << "Scaling: T=" << a.T << ", N=" << a.N << ", " << a.datasets << " dataset(s) per J\n";
  for (int J : a.js) {
    json entry{{"J", J}};
    std::vector<json> mean_t(methods.size(), json::object());
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      // timings averaged over every start of every dataset
      std::vector<json> all;
      for (int k = 0; k < a.datasets; ++k) {
        const uint64_t seed = a.common.seed * 1000003ULL + static_cast<uint64_t>(J) * 101ULL + static_cast<uint64_t>(k);
        Dataset d = generate(J, a.T, a.N, seed);
        json run = estimate(d.get(), cfg.get(), methods[mi], seed);
        for (const auto& s : run["starts"]) all.push_back(s["timings"]);
      }
      double inner_wall = 0, n_inner = 0;
      for (const char* key : {"wall_clock_total", "time_per_inner_iter", "time_per_criterion_eval", "n_outer", "n_inner",
                              "n_criterion_evals", "inner_wall"}) {
        double acc = 0;
        for (const auto& t : all) acc += t[key].get<double>();
        mean_t[mi][key] = acc / static_cast<double>(all.size());
      }
      for (const auto& t : all) {
        inner_wall += t["inner_wall"].get<double>();
        n_inner += t["n_inner"].get<double>();
      }
      // pooled: total inner time over total inner iterations
      mean_t[mi]["time_per_inner_iter"] = n_inner > 0 ? inner_wall / n_inner : 0.0;
      tpi[mi].push_back(mean_t[mi]["time_per_inner_iter"].get<double>());
      entry[methods[mi]] = mean_t[mi];
    }
    text << "\nJ = " << J << "\n" << panels(methods, mean_t);
    per_j.push_back(std::move(entry));
  }
  json slopes = json::object();
  std::vector<double> x(a.js.begin(), a.js.end());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    double slope = 0, intercept = 0;
    std::vector<double> res(x.size());
    check(blpnp_loglog_slope(x.data(), tpi[mi].data(), x.size(), &slope, &intercept, res.data()));
    slopes[methods[mi]] = {{"slope", slope}, {"intercept", intercept}, {"residuals", res}};
    text << "\n" << methods[mi] << ": log-log slope of time per inner iteration on J = " << fmt(slope, 3)
         << " (residuals";
    for (double r : res) text << " " << fmt(r, 4);
    text << ")\n";
  }
  json report{{"command", "scaling"}, {"J", a.js}, {"T", a.T}, {"N", a.N}, {"per_J", per_j}, {"slopes", slopes}};
  write_file(out / "scaling_report.json", report.dump(2));
  write_file(out / "scaling_report.txt", text.str());
  std::cout << text.str();
  return kOk;
}

// ---- generate ----

struct GenerateArgs {
  int J = 25, T = 50, N = 1000;
  uint64_t seed = 1;
  bool zero_xi = false;
  std::string out_dir = ".";
};

int cmd_generate(const GenerateArgs& a) {
  std::ostringstream s;
  s << "J=" << a.J << ";T=" << a.T << ";N=" << a.N << ";zero_xi=" << (a.zero_xi ? 1 : 0);
  blpnp_dataset* raw = nullptr;
  check(blpnp_dataset_generate(s.str().c_str(), a.seed, &raw));
  Dataset d(raw);
  const fs::path out = ensure_dir(a.out_dir);
  const std::string products = (out / "products.csv").string(), draws = (out / "draws.csv").string();
  check(blpnp_dataset_save(d.get(), products.c_str(), draws.c_str()));
  const Dims dm = dims(d.get());
  json truth_j{{"names", parameter_names(dm)}, {"theta", truth(d.get())}, {"seed", a.seed}};
  write_file(out / "truth.json", truth_j.dump(2));
  std::cout << "wrote " << products << " and " << draws << " (T=" << dm.T << ", J=" << dm.J << ", N=" << dm.N << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-coefficients logit demand estimation (NP-GMM, ABLP, NFXP)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(blpnp_version()));

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "estimate a model from CSV data");
  est.common.add(e);
  e->add_option("--method", est.method, "npgmm, ablp, nfxp or all")->envname("BLPNP_METHOD");
  e->add_option("--data", est.data, "products CSV")->required()->envname("BLPNP_DATA");
  e->add_option("--draws", est.draws, "consumer draws CSV")->required()->envname("BLPNP_DRAWS");

  MonteCarloArgs mc;
  auto* m = app.add_subcommand("montecarlo", "simulate datasets and estimate with NP-GMM and ABLP");
  mc.common.add(m);
  m->add_option("--replications", mc.replications, "number of simulated datasets")->envname("BLPNP_REPLICATIONS");
  m->add_option("--J", mc.J, "products per market")->envname("BLPNP_J");
  m->add_option("--T", mc.T, "markets")->envname("BLPNP_T");
  m->add_option("--N", mc.N, "consumer draws per market")->envname("BLPNP_N");

  SweepArgs sw;
  auto* s = app.add_subcommand("thread-sweep", "time criterion and gradient evaluations across thread counts");
  sw.common.add(s);
  s->add_option("--method", sw.method, "npgmm, ablp, nfxp or all")->envname("BLPNP_METHOD");
  s->add_option("--thread-list", sw.threads, "thread counts to time")->delimiter(',')->envname("BLPNP_THREAD_LIST");
  s->add_option("--evaluations", sw.evaluations, "evaluations per thread count")->envname("BLPNP_EVALUATIONS");
  s->add_option("--data", sw.data, "products CSV (default: simulated)")->envname("BLPNP_DATA");
  s->add_option("--draws", sw.draws, "consumer draws CSV")->envname("BLPNP_DRAWS");
  s->add_option("--J", sw.J, "products per market for simulated data")->envname("BLPNP_J");
  s->add_option("--T", sw.T, "markets for simulated data")->envname("BLPNP_T");
  s->add_option("--N", sw.N, "draws per market for simulated data")->envname("BLPNP_N");

  ScalingArgs sc;
  auto* c = app.add_subcommand("scaling", "fit log-log slopes of time per inner iteration on J");
  sc.common.add(c);
  c->add_option("--J-list", sc.js, "numbers of products")->delimiter(',')->envname("BLPNP_J_LIST");
  c->add_option("--T", sc.T, "markets")->envname("BLPNP_T");
  c->add_option("--N", sc.N, "draws per market")->envname("BLPNP_N");
  c->add_option("--datasets", sc.datasets, "datasets per J")->envname("BLPNP_DATASETS");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a simulated dataset as CSV");
  g->add_option("--J", gen.J, "products per market")->envname("BLPNP_J");
  g->add_option("--T", gen.T, "markets")->envname("BLPNP_T");
  g->add_option("--N", gen.N, "draws per market")->envname("BLPNP_N");
  g->add_option("--seed", gen.seed, "seed")->envname("BLPNP_SEED");
  g->add_flag("--zero-xi", gen.zero_xi, "set the structural errors to zero")->envname("BLPNP_ZERO_XI");
  g->add_option("--out-dir", gen.out_dir, "output directory")->envname("BLPNP_OUT_DIR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*e) return cmd_estimate(est);
    if (*m) return cmd_montecarlo(mc);
    if (*s) return cmd_sweep(sw);
    if (*c) return cmd_scaling(sc);
    if (*g) return cmd_generate(gen);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return exit_code(f.status);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kOther;
  }
  return kOther;
}
