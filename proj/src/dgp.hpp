#pragma once

#include "dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace blpnp {

struct DgpConfig {
  Index J = 25;
  Index T = 50;
  Index N = 1000;
  std::uint64_t seed = 1;
  Vector beta_true = (Vector(5) << 0.0, 1.5, 1.5, 0.5, -3.0).finished();
  Vector sigma_true = (Vector(5) << std::sqrt(0.5), std::sqrt(0.5), std::sqrt(0.5), std::sqrt(0.5), std::sqrt(0.2))
                          .finished();
  Matrix x_cov = (Matrix(3, 3) << 1.0, -0.8, 0.3, -0.8, 1.0, 0.3, 0.3, 0.3, 1.0).finished();
  // p = price_const + price_x (x1 + x2 + x3) + price_xi xi + price_omega omega
  double price_const = 3.0;
  double price_x = 1.0;
  double price_xi = 1.5;
  double price_omega = 5.0;
  // w_k = shifter_scale |shifter_omega omega + shifter_x (x1 + x2 + x3)| + e_k
  double shifter_scale = 0.25;
  double shifter_omega = 5.0;
  double shifter_x = 1.1;
  bool zero_xi = false;  // force xi = 0 (exact-fit datasets)

  void validate() const;
};

/// Output of the generator. Products are stacked market-major; x columns are
/// (1, x1, x2, x3, p).
struct GeneratedData {
  MarketDataset data;
  ModelParameters truth;
  MeanUtilities delta_true;
  Vector xi;
  Vector omega;
  Matrix shifters;  // T*J x 6
};

GeneratedData generate_dataset(const DgpConfig& config);

/// Constant; x levels, squares, cubes; w levels, squares, cubes; prod x; prod w;
/// x1 * w; x2 * w. Needs 3 x columns and 6 w columns; returns 42 columns.
Matrix build_instruments(const Matrix& x, const Matrix& w);

struct GroupMeans {
  Matrix values;                      // NaN where the group is a singleton
  std::vector<std::string> warnings;  // one per singleton product
};

/// Leave-one-out mean of each column over the other products with the same label.
GroupMeans group_mean_instruments(const Matrix& columns, const std::vector<std::string>& groups);

}  // namespace blpnp
