#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace blpnp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class ErrorKind { Input, Numerical, Convergence };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Iterative solver ran out of iterations. Carries the last iterate and its residual norm.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Vector last_iterate, double residual)
      : Error(ErrorKind::Convergence, what), last_(std::move(last_iterate)), residual_(residual) {}
  const Vector& last_iterate() const noexcept { return last_; }
  double residual() const noexcept { return residual_; }

 private:
  Vector last_;
  double residual_;
};

/// Nonlinear part of the structural parameters: random-coefficient scales and
/// demographic interactions. Packed order is sigma (K) followed by pi row-major (K x R).
struct RandomCoefs {
  Vector sigma;
  Matrix pi;

  RandomCoefs() = default;
  RandomCoefs(Vector s, Matrix p) : sigma(std::move(s)), pi(std::move(p)) {}
  static RandomCoefs zeros(Index k, Index r) { return {Vector::Zero(k), Matrix::Zero(k, r)}; }

  Index chars() const { return sigma.size(); }
  Index demographics() const { return pi.cols(); }
  Index size() const { return sigma.size() + pi.size(); }

  Vector packed() const {
    Vector out(size());
    out.head(sigma.size()) = sigma;
    Index pos = sigma.size();
    for (Index k = 0; k < pi.rows(); ++k)
      for (Index r = 0; r < pi.cols(); ++r) out(pos++) = pi(k, r);
    return out;
  }

  static RandomCoefs unpack(const Vector& v, Index k, Index r) {
    if (v.size() != k + k * r) throw InputError("packed random coefficients have wrong length");
    RandomCoefs rc{v.head(k), Matrix(k, r)};
    Index pos = k;
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < r; ++b) rc.pi(a, b) = v(pos++);
    return rc;
  }
};

/// Structural vector theta = (beta, sigma, pi).
struct ModelParameters {
  Vector beta;
  RandomCoefs rc;

  Index size() const { return beta.size() + rc.size(); }

  /// beta followed by the packed random coefficients.
  Vector stacked() const {
    Vector out(size());
    out.head(beta.size()) = beta;
    out.tail(rc.size()) = rc.packed();
    return out;
  }

  static ModelParameters unstack(const Vector& v, Index k, Index r) {
    if (v.size() != 2 * k + k * r) throw InputError("stacked parameters have wrong length");
    return {v.head(k), RandomCoefs::unpack(v.tail(k + k * r), k, r)};
  }

  bool finite() const { return beta.allFinite() && rc.sigma.allFinite() && rc.pi.allFinite(); }
};

/// Mean utilities delta_jt stacked market-major (row t*J + j).
struct MeanUtilities {
  Vector delta;
};

/// Consumer-level outside-option probabilities lambda_it stacked market-major (row t*N + i).
struct OutsideProbs {
  Vector lambda;
};

/// Read-only view of one market's characteristics and consumer draws.
struct MarketView {
  Eigen::Ref<const Matrix> x;     // J x K
  Eigen::Ref<const Matrix> nu;    // N x K
  Eigen::Ref<const Matrix> demo;  // N x R
  Index market = 0;               // for diagnostics only
};

}  // namespace blpnp
