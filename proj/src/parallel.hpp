#pragma once

#include "types.hpp"

#include <exception>
#include <vector>

namespace blpnp {

/// Runs fn(t) for every market t. Markets are split statically across
/// `threads` OpenMP threads; each market is processed by exactly one thread, so
/// per-market results do not depend on the thread count. Callers combine
/// per-market partial results afterwards in market order. If several markets
/// throw, the exception of the lowest market index is rethrown.
template <class F>
void for_each_market(Index markets, int threads, F&& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(markets));
  const int team = threads < 1 ? 1 : threads;
#pragma omp parallel for schedule(static) num_threads(team) if (team > 1)
  for (Index t = 0; t < markets; ++t) {
    try {
      fn(t);
    } catch (...) {
      errors[static_cast<std::size_t>(t)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace blpnp
