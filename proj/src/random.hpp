#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace blpnp {

/// Independent substream keyed by a tuple of integers (seed, purpose, ...).
class Stream {
 public:
  Stream(std::initializer_list<std::uint64_t> key);

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal by inverse CDF of uniform().
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Substream purposes.
enum Purpose : std::uint64_t {
  kPurposeX = 1,
  kPurposeProduct = 2,
  kPurposeDraws = 3,
  kPurposeStarts = 4,
};

}  // namespace blpnp
