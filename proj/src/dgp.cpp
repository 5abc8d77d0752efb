#include "dgp.hpp"

#include "model.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace blpnp {

void DgpConfig::validate() const {
  if (J < 1 || T < 1 || N < 1) throw InputError("J, T and N must be >= 1");
  if (beta_true.size() != 5 || sigma_true.size() != 5) throw InputError("beta_true and sigma_true need 5 entries");
  if (x_cov.rows() != 3 || x_cov.cols() != 3) throw InputError("x covariance must be 3 x 3");
  if (!beta_true.allFinite() || !sigma_true.allFinite() || !x_cov.allFinite())
    throw InputError("DGP parameters must be finite");
}

Matrix build_instruments(const Matrix& x, const Matrix& w) {
  if (x.cols() != 3 || w.cols() != 6) throw InputError("instrument construction needs 3 x columns and 6 w columns");
  if (x.rows() != w.rows()) throw InputError("x and w must have the same number of rows");
  Matrix z(x.rows(), 42);
  const auto xa = x.array();
  const auto wa = w.array();
  z.col(0).setOnes();
  z.middleCols(1, 3) = x;
  z.middleCols(4, 3) = xa.square().matrix();
  z.middleCols(7, 3) = xa.cube().matrix();
  z.middleCols(10, 6) = w;
  z.middleCols(16, 6) = wa.square().matrix();
  z.middleCols(22, 6) = wa.cube().matrix();
  z.col(28) = xa.rowwise().prod().matrix();
  z.col(29) = wa.rowwise().prod().matrix();
  z.middleCols(30, 6) = (wa.colwise() * xa.col(0)).matrix();
  z.middleCols(36, 6) = (wa.colwise() * xa.col(1)).matrix();
  return z;
}

GroupMeans group_mean_instruments(const Matrix& columns, const std::vector<std::string>& groups) {
  if (static_cast<Index>(groups.size()) != columns.rows()) throw InputError("one group label per product is required");
  std::map<std::string, std::pair<Vector, Index>> totals;
  for (Index j = 0; j < columns.rows(); ++j) {
    auto& [sum, count] = totals[groups[j]];
    if (sum.size() == 0) sum = Vector::Zero(columns.cols());
    sum += columns.row(j).transpose();
    ++count;
  }
  bool any_pair = false;
  for (const auto& [label, entry] : totals) any_pair = any_pair || entry.second > 1;
  if (!any_pair) throw InputError("every group is a singleton; leave-one-out means are undefined");
  GroupMeans out;
  out.values.resize(columns.rows(), columns.cols());
  for (Index j = 0; j < columns.rows(); ++j) {
    const auto& [sum, count] = totals[groups[j]];
    if (count == 1) {
      out.values.row(j).setConstant(std::nan(""));
      out.warnings.push_back("product " + std::to_string(j) + " is alone in group '" + groups[j] + "'");
    } else {
      out.values.row(j) = (sum - columns.row(j).transpose()) / static_cast<double>(count - 1);
    }
  }
  return out;
}

GeneratedData generate_dataset(const DgpConfig& cfg) {
  cfg.validate();
  const Index J = cfg.J, T = cfg.T, N = cfg.N, K = 5;
  Eigen::LLT<Matrix> llt(cfg.x_cov);
  if (llt.info() != Eigen::Success) throw InputError("x covariance is not positive definite");
  const Matrix chol = llt.matrixL();

  Matrix xj(J, 3);
  for (Index j = 0; j < J; ++j) {
    Stream s{cfg.seed, kPurposeX, static_cast<std::uint64_t>(j)};
    Vector e(3);
    for (Index k = 0; k < 3; ++k) e(k) = s.normal();
    xj.row(j) = (chol * e).transpose();
  }

  const Index obs = T * J;
  Matrix x(obs, K), w(obs, 6), xs(obs, 3);
  Vector xi(obs), omega(obs);
  for (Index t = 0; t < T; ++t)
    for (Index j = 0; j < J; ++j) {
      const Index r = t * J + j;
      Stream s{cfg.seed, kPurposeProduct, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(j)};
      xi(r) = s.normal();
      omega(r) = s.uniform();
      if (cfg.zero_xi) xi(r) = 0.0;
      const double xsum = xj.row(j).sum();
      xs.row(r) = xj.row(j);
      x(r, 0) = 1.0;
      x.block(r, 1, 1, 3) = xj.row(j);
      x(r, 4) = cfg.price_const + cfg.price_x * xsum + cfg.price_xi * xi(r) + cfg.price_omega * omega(r);
      const double base = cfg.shifter_scale * std::abs(cfg.shifter_omega * omega(r) + cfg.shifter_x * xsum);
      for (Index k = 0; k < 6; ++k) w(r, k) = base + s.uniform();
    }

  Matrix nu(T * N, K);
  for (Index t = 0; t < T; ++t) {
    Stream s{cfg.seed, kPurposeDraws, static_cast<std::uint64_t>(t)};
    for (Index i = 0; i < N; ++i)
      for (Index k = 0; k < K; ++k) nu(t * N + i, k) = s.normal();
  }

  const RandomCoefs rc(cfg.sigma_true, Matrix(K, 0));
  const Vector delta = x * cfg.beta_true + xi;
  Vector shares(obs);
  const Matrix demo(T * N, 0);
  for_each_market(T, 1, [&](Index t) {
    const MarketView m{x.middleRows(t * J, J), nu.middleRows(t * N, N), demo.middleRows(t * N, N), t};
    shares.segment(t * J, J) = predict_shares(delta.segment(t * J, J), m, rc);
  });
  for (Index t = 0; t < T; ++t)
    if (!(shares.segment(t * J, J).sum() < 1.0) || !(shares.segment(t * J, J).minCoeff() > 0.0)) {
      std::ostringstream os;
      os << "simulated market " << t << " has degenerate shares";
      throw NumericalError(os.str());
    }

  Matrix z = build_instruments(xs, w);
  GeneratedData out{MarketDataset(T, J, std::move(x), std::move(z), std::move(shares), std::move(nu), Matrix(T * N, 0)),
                    ModelParameters{cfg.beta_true, rc},
                    MeanUtilities{delta},
                    std::move(xi),
                    std::move(omega),
                    std::move(w)};
  return out;
}

}  // namespace blpnp
