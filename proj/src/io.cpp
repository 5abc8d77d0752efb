#include "io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace blpnp {

double parse_double(const std::string& text, const std::string& what) {
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw InputError(what + ": '" + text + "' is not a finite number");
  return v;
}

long parse_long(const std::string& text, const std::string& what) {
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0' || errno == ERANGE) throw InputError(what + ": '" + text + "' is not an integer");
  return v;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  Table t;
  t.name = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    t.rows.push_back(split(line));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw InputError(path + ": missing header row");
  return t;
}

// Column index lookup with a numbered family prefix_1..prefix_n.
struct Schema {
  std::map<std::string, std::size_t> index;
  explicit Schema(const Table& t) {
    for (std::size_t c = 0; c < t.header.size(); ++c) index[t.header[c]] = c;
  }
  std::size_t require(const Table& t, const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw InputError(t.name + ": missing required column '" + name + "'");
    return it->second;
  }
  std::vector<std::size_t> family(const std::string& prefix) const {
    std::vector<std::size_t> cols;
    for (int k = 1;; ++k) {
      auto it = index.find(prefix + std::to_string(k));
      if (it == index.end()) break;
      cols.push_back(it->second);
    }
    return cols;
  }
};

class Errors {
 public:
  void add(const std::string& msg) {
    if (list_.size() < 50) list_.push_back(msg);
    ++count_;
  }
  void raise_if_any() const {
    if (count_ == 0) return;
    std::ostringstream os;
    for (const auto& e : list_) os << e << "\n";
    if (count_ > list_.size()) os << "(" << count_ - list_.size() << " more)\n";
    throw InputError(os.str());
  }

 private:
  std::vector<std::string> list_;
  std::size_t count_ = 0;
};

double cell(const Table& t, std::size_t r, std::size_t c, Errors& errors) {
  const auto& row = t.rows[r];
  std::ostringstream where;
  where << t.name << " line " << t.line_numbers[r] << ", column '" << t.header[c] << "'";
  if (c >= row.size()) {
    errors.add(where.str() + ": missing value");
    return 0.0;
  }
  try {
    return parse_double(row[c], where.str());
  } catch (const InputError& e) {
    errors.add(e.what());
    return 0.0;
  }
}

std::string id_cell(const Table& t, std::size_t r, std::size_t c, Errors& errors) {
  const auto& row = t.rows[r];
  if (c >= row.size() || row[c].empty()) {
    errors.add(t.name + " line " + std::to_string(t.line_numbers[r]) + ": missing " + t.header[c]);
    return "";
  }
  return row[c];
}

void write_number(std::FILE* f, double v) { std::fprintf(f, "%.17g", v); }

}  // namespace

MarketDataset load_dataset(const std::string& products_path, const std::string& draws_path) {
  const Table prod = read_table(products_path);
  const Table draw = read_table(draws_path);
  const Schema ps(prod), ds(draw);
  const std::size_t c_market = ps.require(prod, "market_id");
  const std::size_t c_product = ps.require(prod, "product_id");
  const std::size_t c_share = ps.require(prod, "share");
  const auto c_x = ps.family("x_");
  const auto c_z = ps.family("z_");
  if (c_x.empty()) throw InputError(products_path + ": missing required column 'x_1'");
  if (c_z.empty()) throw InputError(products_path + ": missing required column 'z_1'");
  const auto size_it = ps.index.find("market_size");
  const bool has_size = size_it != ps.index.end();

  const std::size_t d_market = ds.require(draw, "market_id");
  ds.require(draw, "consumer_id");
  const auto c_nu = ds.family("nu_");
  const auto c_d = ds.family("d_");
  if (c_nu.empty()) throw InputError(draws_path + ": missing required column 'nu_1'");
  if (c_nu.size() != c_x.size()) {
    std::ostringstream os;
    os << draws_path << ": " << c_nu.size() << " nu columns but " << c_x.size() << " characteristics in "
       << products_path;
    throw InputError(os.str());
  }

  Errors errors;
  // group rows by market in order of first appearance
  std::vector<std::string> markets;
  std::map<std::string, std::vector<std::size_t>> prod_rows, draw_rows;
  for (std::size_t r = 0; r < prod.rows.size(); ++r) {
    if (prod.rows[r].size() != prod.header.size()) {
      std::ostringstream os;
      os << products_path << " line " << prod.line_numbers[r] << ": expected " << prod.header.size() << " fields, got "
         << prod.rows[r].size();
      errors.add(os.str());
      continue;
    }
    const std::string m = id_cell(prod, r, c_market, errors);
    id_cell(prod, r, c_product, errors);
    if (!prod_rows.count(m)) markets.push_back(m);
    prod_rows[m].push_back(r);
  }
  for (std::size_t r = 0; r < draw.rows.size(); ++r) {
    if (draw.rows[r].size() != draw.header.size()) {
      std::ostringstream os;
      os << draws_path << " line " << draw.line_numbers[r] << ": expected " << draw.header.size() << " fields, got "
         << draw.rows[r].size();
      errors.add(os.str());
      continue;
    }
    draw_rows[id_cell(draw, r, d_market, errors)].push_back(r);
  }
  errors.raise_if_any();
  if (markets.empty()) throw InputError(products_path + ": no product rows");

  const Index T = static_cast<Index>(markets.size());
  const Index J = static_cast<Index>(prod_rows[markets[0]].size());
  const auto first_draws = draw_rows.find(markets[0]);
  const Index N = first_draws == draw_rows.end() ? 0 : static_cast<Index>(first_draws->second.size());
  for (const auto& m : markets) {
    if (static_cast<Index>(prod_rows[m].size()) != J)
      errors.add(products_path + ": market '" + m + "' has " + std::to_string(prod_rows[m].size()) +
                 " products, expected " + std::to_string(J));
    auto it = draw_rows.find(m);
    if (it == draw_rows.end())
      errors.add(draws_path + ": no draws for market '" + m + "'");
    else if (static_cast<Index>(it->second.size()) != N)
      errors.add(draws_path + ": market '" + m + "' has " + std::to_string(it->second.size()) + " draws, expected " +
                 std::to_string(N));
  }
  for (const auto& [m, rows] : draw_rows)
    if (!prod_rows.count(m)) errors.add(draws_path + ": market '" + m + "' has no products");
  errors.raise_if_any();

  const Index K = static_cast<Index>(c_x.size()), q = static_cast<Index>(c_z.size()),
              R = static_cast<Index>(c_d.size());
  Matrix x(T * J, K), z(T * J, q), nu(T * N, K), demo(T * N, R);
  Vector shares(T * J);
  std::optional<Vector> size;
  if (has_size) size = Vector(T);
  for (Index t = 0; t < T; ++t) {
    const auto& rows = prod_rows[markets[t]];
    for (Index j = 0; j < J; ++j) {
      const std::size_t r = rows[j];
      const Index o = t * J + j;
      shares(o) = cell(prod, r, c_share, errors);
      const double s = shares(o);
      if (!(s > 0.0 && s < 1.0))
        errors.add(products_path + " line " + std::to_string(prod.line_numbers[r]) + ", column 'share': " +
                   prod.rows[r][c_share] + " is not in (0,1)");
      for (Index k = 0; k < K; ++k) x(o, k) = cell(prod, r, c_x[k], errors);
      for (Index k = 0; k < q; ++k) z(o, k) = cell(prod, r, c_z[k], errors);
      if (has_size) {
        const double v = cell(prod, r, size_it->second, errors);
        if (j == 0)
          (*size)(t) = v;
        else if (v != (*size)(t))
          errors.add(products_path + " line " + std::to_string(prod.line_numbers[r]) +
                     ": market_size differs within market '" + markets[t] + "'");
      }
    }
    double inside = shares.segment(t * J, J).sum();
    if (!(inside < 1.0)) {
      std::ostringstream os;
      os << products_path << ": shares in market '" << markets[t] << "' sum to " << inside
         << " (lines " << prod.line_numbers[rows.front()] << "-" << prod.line_numbers[rows.back()]
         << "); the outside share must be positive";
      errors.add(os.str());
    }
    const auto& drows = draw_rows[markets[t]];
    for (Index i = 0; i < N; ++i) {
      for (Index k = 0; k < K; ++k) nu(t * N + i, k) = cell(draw, drows[i], c_nu[k], errors);
      for (Index r = 0; r < R; ++r) demo(t * N + i, r) = cell(draw, drows[i], c_d[r], errors);
    }
  }
  errors.raise_if_any();
  return MarketDataset(T, J, std::move(x), std::move(z), std::move(shares), std::move(nu), std::move(demo),
                       std::move(size));
}

void save_dataset(const MarketDataset& data, const std::string& products_path, const std::string& draws_path) {
  const Index T = data.markets(), J = data.products(), N = data.draws(), K = data.chars(), q = data.instruments(),
              R = data.demographics();
  using File = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;
  File pf(std::fopen(products_path.c_str(), "w"), &std::fclose);
  if (!pf) throw InputError("cannot write " + products_path);
  std::fprintf(pf.get(), "market_id,product_id,share");
  for (Index k = 0; k < K; ++k) std::fprintf(pf.get(), ",x_%ld", static_cast<long>(k + 1));
  for (Index k = 0; k < q; ++k) std::fprintf(pf.get(), ",z_%ld", static_cast<long>(k + 1));
  if (data.market_size()) std::fprintf(pf.get(), ",market_size");
  std::fprintf(pf.get(), "\n");
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < J; ++j) {
      const Index o = t * J + j;
      std::fprintf(pf.get(), "%ld,%ld,", static_cast<long>(t), static_cast<long>(j));
      write_number(pf.get(), data.shares()(o));
      for (Index k = 0; k < K; ++k) {
        std::fputc(',', pf.get());
        write_number(pf.get(), data.x()(o, k));
      }
      for (Index k = 0; k < q; ++k) {
        std::fputc(',', pf.get());
        write_number(pf.get(), data.z()(o, k));
      }
      if (data.market_size()) {
        std::fputc(',', pf.get());
        write_number(pf.get(), (*data.market_size())(t));
      }
      std::fputc('\n', pf.get());
    }

  File df(std::fopen(draws_path.c_str(), "w"), &std::fclose);
  if (!df) throw InputError("cannot write " + draws_path);
  std::fprintf(df.get(), "market_id,consumer_id");
  for (Index k = 0; k < K; ++k) std::fprintf(df.get(), ",nu_%ld", static_cast<long>(k + 1));
  for (Index r = 0; r < R; ++r) std::fprintf(df.get(), ",d_%ld", static_cast<long>(r + 1));
  std::fprintf(df.get(), "\n");
  for (Index t = 0; t < T; ++t)
    for (Index i = 0; i < N; ++i) {
      const Index o = t * N + i;
      std::fprintf(df.get(), "%ld,%ld", static_cast<long>(t), static_cast<long>(i));
      for (Index k = 0; k < K; ++k) {
        std::fputc(',', df.get());
        write_number(df.get(), data.nu()(o, k));
      }
      for (Index r = 0; r < R; ++r) {
        std::fputc(',', df.get());
        write_number(df.get(), data.demo()(o, r));
      }
      std::fputc('\n', df.get());
    }
  if (std::ferror(pf.get()) || std::ferror(df.get())) throw InputError("write error while saving dataset");
}

WeightKind parse_weight_kind(const std::string& name) {
  if (name == "two_stage" || name == "two-stage") return WeightKind::TwoStage;
  if (name == "identity") return WeightKind::Identity;
  throw InputError("unknown weight '" + name + "' (expected two_stage or identity)");
}

const char* weight_kind_name(WeightKind k) { return k == WeightKind::TwoStage ? "two_stage" : "identity"; }

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InputError(key + ": '" + v + "' is not a boolean");
}

int parse_int(const std::string& v, const std::string& key) {
  const long x = parse_long(v, key);
  if (x < INT32_MIN || x > INT32_MAX) throw InputError(key + ": out of range");
  return static_cast<int>(x);
}

}  // namespace

void apply_setting(RunSettings& s, const std::string& key, const std::string& value) {
  SolverConfig& c = s.solver;
  if (key == "tol_outer") c.tol_outer = parse_double(value, key);
  else if (key == "max_outer") c.max_outer = parse_int(value, key);
  else if (key == "starts" || key == "n_starts") c.n_starts = parse_int(value, key);
  else if (key == "threads") c.threads = parse_int(value, key);
  else if (key == "newton_outer") c.newton_outer = parse_bool(value, key);
  else if (key == "ablp_fd_gradient") c.ablp_fd_gradient = parse_bool(value, key);
  else if (key == "abort_ratio") c.abort_ratio = parse_double(value, key);
  else if (key == "grad_tol") c.inner.grad_tol = parse_double(value, key);
  else if (key == "inner_max_iter") c.inner.max_iter = parse_int(value, key);
  else if (key == "tol_delta") c.inversion.tol_delta = parse_double(value, key);
  else if (key == "max_iter_newton") c.inversion.max_iter_newton = parse_int(value, key);
  else if (key == "max_iter_contraction") c.inversion.max_iter_contraction = parse_int(value, key);
  else if (key == "cond_limit") c.inversion.cond_limit = parse_double(value, key);
  else if (key == "weight") s.weight = parse_weight_kind(value);
  else if (key == "variance") s.variance = parse_omega_kind(value);
  else throw InputError("unknown setting '" + key + "'");
}

void load_config(RunSettings& settings, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(path + " line " + std::to_string(line_no) + ": expected key=value");
    try {
      apply_setting(settings, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const InputError& e) {
      throw InputError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  settings.solver.validate();
}

}  // namespace blpnp
