#pragma once

#include "dgp.hpp"
#include "gmm.hpp"
#include "model.hpp"

#include <functional>
#include <random>

namespace blpnp::test {

// Owns the matrices behind a MarketView.
struct Market {
  Matrix x, nu, demo;
  MarketView view() const { return {x, nu, demo, 0}; }
};

inline Matrix randn(std::mt19937_64& g, Index r, Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = d(g);
  return m;
}

inline Vector randu(std::mt19937_64& g, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = d(g);
  return v;
}

inline Market random_market(std::mt19937_64& g, Index J, Index K, Index N, Index R = 0) {
  return {randn(g, J, K), randn(g, N, K), randn(g, N, R)};
}

inline RandomCoefs random_rc(std::mt19937_64& g, Index K, Index R, double bound) {
  RandomCoefs rc{randu(g, K, -bound, bound), Matrix(K, R)};
  if (R > 0) rc.pi = randu(g, K * R, -0.5 * bound, 0.5 * bound).reshaped(K, R);
  return rc;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double max_rel_err(const Matrix& a, const Matrix& b) {
  double e = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) e = std::max(e, rel_err(a(i, j), b(i, j)));
  return e;
}

// Central differences of a vector-valued function.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix out(f0.size(), x.size());
  for (Index c = 0; c < x.size(); ++c) {
    Vector up = x, dn = x;
    up(c) += h;
    dn(c) -= h;
    out.col(c) = (f(up) - f(dn)) / (2.0 * h);
  }
  return out;
}

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  return fd_jacobian([&](const Vector& v) { return Vector::Constant(1, f(v)); }, x, h).row(0).transpose();
}

// Simulated data with fewer products than the full instrument set allows:
// drops x cubes and the x product so the x-only block stays below J.
inline MarketDataset reduced_instruments(const MarketDataset& d) {
  std::vector<Index> keep;
  for (Index c = 0; c < d.instruments(); ++c)
    if (!(c >= 7 && c <= 9) && c != 28) keep.push_back(c);
  Matrix z(d.observations(), static_cast<Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) z.col(static_cast<Index>(i)) = d.z().col(keep[i]);
  return MarketDataset(d.markets(), d.products(), d.x(), z, d.shares(), d.nu(), d.demo());
}

struct RandomData {
  MarketDataset data;
  ModelParameters theta;
  Vector delta;
};

// Shares generated by the model at a random theta; x has a constant first
// column and z = [x, extra random columns].
inline RandomData random_dataset(std::mt19937_64& g, Index T, Index J, Index K, Index N, Index R, Index extra_z,
                                 double sigma_bound = 1.0) {
  Matrix x = randn(g, T * J, K);
  x.col(0).setOnes();
  Matrix z(T * J, K + extra_z);
  z << x, randn(g, T * J, extra_z);
  const Matrix nu = randn(g, T * N, K), demo = randn(g, T * N, R);
  ModelParameters th{randn(g, K, 1, 0.5), random_rc(g, K, R, sigma_bound)};
  th.beta(0) = -2.0;
  const Vector delta = x * th.beta + randn(g, T * J, 1, 0.3);
  Vector s(T * J);
  for (Index t = 0; t < T; ++t) {
    const MarketView m{x.middleRows(t * J, J), nu.middleRows(t * N, N), demo.middleRows(t * N, N), t};
    s.segment(t * J, J) = predict_shares(delta.segment(t * J, J), m, th.rc);
  }
  return {MarketDataset(T, J, x, z, s, nu, demo), th, delta};
}

inline GeneratedData small_dgp(Index J, Index T, Index N, std::uint64_t seed, bool zero_xi = false) {
  DgpConfig c;
  c.J = J;
  c.T = T;
  c.N = N;
  c.seed = seed;
  c.zero_xi = zero_xi;
  return generate_dataset(c);
}

}  // namespace blpnp::test
