#include "optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blpnp {

void OptimizerSettings::validate() const {
  if (!(grad_tol > 0.0)) throw InputError("grad_tol must be positive");
  if (max_iter < 0) throw InputError("max_iter must be nonnegative");
  if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) throw InputError("line search constants need 0 < c1 < c2 < 1");
  if (max_line_search < 1) throw InputError("max_line_search must be >= 1");
  if (!(first_step > 0.0)) throw InputError("first_step must be positive");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Point {
  double a = 0.0;
  double phi = kInf;
  double dphi = 0.0;
  Vector x, g;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Vector& x, const Vector& p, double phi0, double dphi0,
             const OptimizerSettings& s, int& evals)
      : f_(f), x_(x), p_(p), phi0_(phi0), dphi0_(dphi0), s_(s), evals_(evals) {}

  // Returns true on a strong-Wolfe point; otherwise `best` holds the lowest
  // point seen that satisfies sufficient decrease, if any.
  bool run(double a_init, Point& out) {
    Point prev;
    prev.a = 0.0;
    prev.phi = phi0_;
    prev.dphi = dphi0_;
    double a = a_init;
    for (int i = 0; i < s_.max_line_search; ++i) {
      Point cur = eval(a);
      if (!std::isfinite(cur.phi)) {
        // shrink towards the last finite point
        if (budget_exhausted()) break;
        return zoom(prev, cur, out);
      }
      if (!decrease(cur) || (i > 0 && cur.phi >= prev.phi && !flat(cur))) return zoom(prev, cur, out);
      if (std::abs(cur.dphi) <= -s_.c2 * dphi0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.dphi >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      a *= 2.0;
    }
    return fallback(out);
  }

 private:
  Point eval(double a) {
    Point pt;
    pt.a = a;
    pt.x = x_ + a * p_;
    Vector g(x_.size());
    double v = kInf;
    try {
      v = f_(pt.x, &g);
    } catch (const NumericalError&) {
      v = kInf;
    } catch (const ConvergenceError&) {
      v = kInf;
    }
    ++evals_;
    ++used_;
    if (!std::isfinite(v) || !g.allFinite()) {
      pt.phi = kInf;
      return pt;
    }
    pt.phi = v;
    pt.g = std::move(g);
    pt.dphi = pt.g.dot(p_);
    if (decrease(pt) && (best_.x.size() == 0 || pt.phi < best_.phi)) best_ = pt;
    return pt;
  }

  // Sufficient decrease, or the approximate version used once differences in
  // phi are at rounding level: phi barely above phi0 and phi' still bounded.
  bool flat(const Point& pt) const {
    return pt.phi <= phi0_ + 1e-12 * std::abs(phi0_) && pt.dphi <= (2.0 * s_.c1 - 1.0) * dphi0_;
  }
  bool decrease(const Point& pt) const {
    return std::isfinite(pt.phi) && (pt.phi <= phi0_ + s_.c1 * pt.a * dphi0_ || flat(pt));
  }

  bool budget_exhausted() const { return used_ >= s_.max_line_search; }

  bool zoom(Point lo, Point hi, Point& out) {
    while (!budget_exhausted()) {
      const double width = hi.a - lo.a;
      if (std::abs(width) <= 1e-16 * std::max(1.0, std::abs(lo.a))) break;
      double a;
      if (std::isfinite(hi.phi)) {
        // minimizer of the quadratic through phi(lo), phi'(lo), phi(hi)
        const double denom = 2.0 * (hi.phi - lo.phi - lo.dphi * width);
        a = denom > 0.0 ? lo.a - lo.dphi * width * width / denom : lo.a + 0.5 * width;
        const double lo_guard = std::min(lo.a + 0.1 * width, hi.a - 0.1 * width);
        const double hi_guard = std::max(lo.a + 0.1 * width, hi.a - 0.1 * width);
        if (!std::isfinite(a) || a < lo_guard || a > hi_guard) a = lo.a + 0.5 * width;
      } else {
        a = lo.a + 0.25 * width;
      }
      Point cur = eval(a);
      if (!decrease(cur) || (cur.phi >= lo.phi && !flat(cur))) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.dphi) <= -s_.c2 * dphi0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = std::move(cur);
    }
    return fallback(out);
  }

  bool fallback(Point& out) {
    if (best_.x.size() == 0) return false;
    out = best_;
    accepted_weak_ = true;
    return true;
  }

 public:
  bool accepted_weak_ = false;

 private:
  const Objective& f_;
  const Vector& x_;
  const Vector& p_;
  double phi0_, dphi0_;
  const OptimizerSettings& s_;
  int& evals_;
  int used_ = 0;
  Point best_;
};

}  // namespace

OptimResult minimize_bfgs(const Objective& f, const Vector& x0, const OptimizerSettings& settings) {
  settings.validate();
  const Index n = x0.size();
  OptimResult res;
  res.x = x0;
  res.gradient.resize(n);
  res.value = f(res.x, &res.gradient);
  ++res.evaluations;
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
    res.status = "non-finite criterion at the starting point";
    return res;
  }
  if (n == 0 || res.gradient.lpNorm<Eigen::Infinity>() < settings.grad_tol) {
    res.converged = true;
    res.status = "gradient tolerance met";
    return res;
  }

  Matrix H = Matrix::Identity(n, n);
  bool scaled = false;
  while (res.iterations < settings.max_iter) {
    Vector p = -H * res.gradient;
    double dphi0 = p.dot(res.gradient);
    if (!(dphi0 < 0.0)) {
      // lost descent; restart from steepest descent
      H.setIdentity();
      scaled = false;
      p = -res.gradient;
      dphi0 = p.dot(res.gradient);
    }
    const double a_init = res.iterations == 0 ? settings.first_step / p.lpNorm<Eigen::Infinity>() : 1.0;
    LineSearch ls(f, res.x, p, res.value, dphi0, settings, res.evaluations);
    Point pt;
    if (!ls.run(a_init, pt)) {
      res.status = "line search failed";
      return res;
    }
    const bool stalled = ls.accepted_weak_ && !(pt.phi < res.value - 1e-15 * std::abs(res.value));
    if (stalled && pt.phi > res.value) {
      res.status = "no further progress at rounding level";
      return res;
    }
    const Vector s = pt.x - res.x;
    const Vector y = pt.g - res.gradient;
    res.x = std::move(pt.x);
    res.value = pt.phi;
    res.gradient = std::move(pt.g);
    ++res.iterations;

    if (res.gradient.lpNorm<Eigen::Infinity>() < settings.grad_tol) {
      res.converged = true;
      res.status = "gradient tolerance met";
      return res;
    }
    if (settings.step_tol > 0.0 && s.lpNorm<Eigen::Infinity>() < settings.step_tol) {
      res.converged = true;
      res.status = "step tolerance met";
      return res;
    }
    if (stalled) {
      res.status = "no further progress at rounding level";
      return res;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vector hy = H * y;
      // H+ = (I - rho s y') H (I - rho y s') + rho s s'
      H += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  res.status = "iteration limit reached";
  return res;
}

}  // namespace blpnp
