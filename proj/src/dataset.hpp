#pragma once

#include "types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace blpnp {

/// Immutable estimation input: T markets with the same J inside products,
/// K characteristics (price included), q instruments and N fixed consumer
/// draws per market. All tensors are stacked market-major.
class MarketDataset {
 public:
  /// x: (T*J) x K, z: (T*J) x q, shares: T*J, nu: (T*N) x K, demo: (T*N) x R.
  /// Throws InputError listing every violated invariant.
  MarketDataset(Index markets, Index products, Matrix x, Matrix z, Vector shares, Matrix nu,
                Matrix demo, std::optional<Vector> market_size = std::nullopt);

  Index markets() const { return T_; }
  Index products() const { return J_; }
  Index chars() const { return x_.cols(); }
  Index instruments() const { return z_.cols(); }
  Index draws() const { return N_; }
  Index demographics() const { return demo_.cols(); }
  Index observations() const { return T_ * J_; }
  /// dim(theta) = 2K + K*R.
  Index parameter_count() const { return 2 * chars() + chars() * demographics(); }

  const Matrix& x() const { return x_; }
  const Matrix& z() const { return z_; }
  const Vector& shares() const { return shares_; }
  const Vector& log_shares() const { return log_shares_; }
  const Vector& outside_shares() const { return outside_; }
  const Matrix& nu() const { return nu_; }
  const Matrix& demo() const { return demo_; }
  const std::optional<Vector>& market_size() const { return market_size_; }

  MarketView market(Index t) const {
    return {x_.middleRows(t * J_, J_), nu_.middleRows(t * N_, N_), demo_.middleRows(t * N_, N_), t};
  }
  auto log_shares(Index t) const { return log_shares_.segment(t * J_, J_); }
  auto shares(Index t) const { return shares_.segment(t * J_, J_); }

  /// Per-market slices of stacked product-level (J per market) and consumer-level (N per market) vectors.
  template <class V>
  auto product_segment(V& v, Index t) const { return v.segment(t * J_, J_); }
  template <class V>
  auto consumer_segment(V& v, Index t) const { return v.segment(t * N_, N_); }

  /// Throws InputError unless q >= dim(theta).
  void require_order_condition() const;

 private:
  Index T_, J_, N_;
  Matrix x_, z_;
  Vector shares_, log_shares_, outside_;
  Matrix nu_, demo_;
  std::optional<Vector> market_size_;
};

}  // namespace blpnp
