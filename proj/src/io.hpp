#pragma once

#include "dataset.hpp"
#include "estimators.hpp"
#include "inference.hpp"

#include <string>
#include <vector>

namespace blpnp {

/// products.csv: market_id, product_id, share, x_1..x_K, z_1..z_q[, market_size]
/// draws.csv: market_id, consumer_id, nu_1..nu_K[, d_1..d_R]
/// Markets and products are taken in order of first appearance. Every
/// violation is reported with its file, row and column.
MarketDataset load_dataset(const std::string& products_path, const std::string& draws_path);

/// Writes both files with 17 significant digits.
void save_dataset(const MarketDataset& data, const std::string& products_path, const std::string& draws_path);

/// Everything a run needs besides the data.
struct RunSettings {
  SolverConfig solver;
  WeightKind weight = WeightKind::TwoStage;
  OmegaKind variance = OmegaKind::Sandwich;
};

/// Applies one key=value setting; unknown keys and bad values throw InputError.
void apply_setting(RunSettings& settings, const std::string& key, const std::string& value);

/// Reads key=value lines; '#' starts a comment.
void load_config(RunSettings& settings, const std::string& path);

WeightKind parse_weight_kind(const std::string& name);
const char* weight_kind_name(WeightKind k);

/// Parses a whole string as a finite double, or throws InputError naming `what`.
double parse_double(const std::string& text, const std::string& what);
long parse_long(const std::string& text, const std::string& what);

}  // namespace blpnp
