#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crt/core.hpp"

namespace crt {

// Synthetic benchmark generators with known conditionally relevant sets.
enum class DgpName {
  LinearSparse,
  LinearDense,
  WeakSignal,
  NoiseBlock,
  Correlated,
  Friedman1,
  Friedman2,
  Friedman3,
  Xor,
  AdditiveInteraction,
  Threshold,
  ConditionalNull,
};

class NoOracleError : public Error {
 public:
  using Error::Error;
};

struct DgpSpec {
  DgpName name = DgpName::LinearSparse;
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::size_t> relevant_set;  // 0-based, ascending
  double noise_sd = 1.0;

  bool is_relevant(std::size_t j) const;
};

struct DgpInstance {
  Dataset data;
  DgpSpec spec;
};

std::string_view dgp_id(DgpName name);
// Human-readable row label used in benchmark tables.
std::string_view dgp_label(DgpName name);
DgpName parse_dgp(std::string_view id);

// Every generator, in definition order.
std::span<const DgpName> all_dgps();
// The eleven benchmarks reported in the published results table, in table order.
std::span<const DgpName> table1_dgps();
// Position in all_dgps(); used as a stable seeding key.
std::size_t dgp_index(DgpName name);

DgpSpec dgp_spec(DgpName name, std::size_t n);

/// Draws n rows from the named generator; fully determined by `seed`.
DgpInstance generate(DgpName name, std::size_t n, std::uint64_t seed);

/// Exact draw from p(X_j | X_{-j}) of the generator. `x_minus_j` holds the
/// other p-1 feature values in column order.
double oracle_conditional(const DgpSpec& spec, std::size_t j,
                          std::span<const double> x_minus_j, std::uint64_t seed);

}  // namespace crt
