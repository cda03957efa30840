#include "crt/dgp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace crt {

namespace {

enum class Marginal { Normal, Uniform };

struct DgpDef {
  DgpName name;
  std::string_view id;
  std::string_view label;
  std::size_t p;
  std::vector<std::size_t> relevant;
  double noise_sd;
  Marginal marginal;
};

const std::array<DgpDef, 12>& definitions() {
  static const std::array<DgpDef, 12> defs = {{
      {DgpName::LinearSparse, "linear_sparse", "Linear (sparse)", 10, {0, 1, 2}, 1.0, Marginal::Normal},
      {DgpName::LinearDense, "linear_dense", "Linear (dense)", 5, {0, 1, 2, 3, 4}, 1.0, Marginal::Normal},
      {DgpName::WeakSignal, "weak_signal", "Weak signal", 5, {0, 1}, 1.0, Marginal::Normal},
      {DgpName::NoiseBlock, "noise_block", "Noise block", 20, {0, 1}, 1.0, Marginal::Normal},
      {DgpName::Correlated, "correlated", "Correlated linear", 5, {0}, 1.0, Marginal::Normal},
      {DgpName::Friedman1, "friedman1", "Friedman 1", 10, {0, 1, 2, 3, 4}, 1.0, Marginal::Uniform},
      {DgpName::Friedman2, "friedman2", "Friedman 2", 10, {0, 1, 2, 3, 4}, 1.0, Marginal::Uniform},
      {DgpName::Friedman3, "friedman3", "Friedman 3", 10, {0, 1, 2, 3}, 1.0, Marginal::Uniform},
      {DgpName::Xor, "xor", "XOR interaction", 5, {0, 1}, 0.0, Marginal::Normal},
      {DgpName::AdditiveInteraction, "additive_interaction", "Additive + interaction", 5, {0, 1, 2}, 1.0, Marginal::Normal},
      {DgpName::Threshold, "threshold", "Threshold feature", 5, {0}, 0.1, Marginal::Uniform},
      {DgpName::ConditionalNull, "conditional_null", "Conditional null", 2, {0}, 1.0, Marginal::Normal},
  }};
  return defs;
}

const DgpDef& definition(DgpName name) {
  return definitions()[dgp_index(name)];
}

// Columns 0 and 1 form the near-duplicate pair X2 = X1 + 0.1 e.
bool has_correlated_pair(DgpName name) {
  return name == DgpName::Correlated || name == DgpName::ConditionalNull;
}

constexpr double kPairNoiseSd = 0.1;

double response(DgpName name, std::span<const double> x, double eps) {
  using std::numbers::pi;
  switch (name) {
    case DgpName::LinearSparse: return 3 * x[0] - 2 * x[1] + x[2] + eps;
    case DgpName::LinearDense: return x[0] + x[1] + x[2] + x[3] + x[4] + eps;
    case DgpName::WeakSignal: return 0.5 * x[0] + 0.5 * x[1] + eps;
    case DgpName::NoiseBlock: return x[0] + x[1] + eps;
    case DgpName::Correlated: return x[0] + eps;
    case DgpName::Friedman1:
      return 10 * std::sin(pi * x[0] * x[1]) + 20 * (x[2] - 0.5) * (x[2] - 0.5) + 10 * x[3] +
             5 * x[4] + eps;
    case DgpName::Friedman2: return x[0] * x[0] + x[1] * x[2] - x[3] + std::sin(x[4]) + eps;
    case DgpName::Friedman3:
      return std::atan((x[0] + x[1]) / (x[2] + 0.1)) + x[3] * x[3] + eps;
    case DgpName::Xor: return ((x[0] > 0) != (x[1] > 0)) ? 1.0 : 0.0;
    case DgpName::AdditiveInteraction: return x[0] + x[1] * x[2] + eps;
    case DgpName::Threshold: return (x[0] > 0.5 ? 1.0 : 0.0) + eps;
    case DgpName::ConditionalNull: return std::sin(x[0]) + eps;
  }
  throw Error("unhandled generator");
}

}  // namespace

bool DgpSpec::is_relevant(std::size_t j) const {
  return std::binary_search(relevant_set.begin(), relevant_set.end(), j);
}

std::string_view dgp_id(DgpName name) { return definition(name).id; }

std::string_view dgp_label(DgpName name) { return definition(name).label; }

DgpName parse_dgp(std::string_view id) {
  for (const auto& def : definitions()) {
    if (def.id == id) return def.name;
  }
  throw InvalidArgument("unknown dgp '" + std::string(id) + "'");
}

std::span<const DgpName> all_dgps() {
  static const std::array<DgpName, 12> names = [] {
    std::array<DgpName, 12> out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = definitions()[i].name;
    return out;
  }();
  return names;
}

std::span<const DgpName> table1_dgps() {
  static const std::array<DgpName, 11> names = {
      DgpName::LinearSparse, DgpName::LinearDense, DgpName::WeakSignal, DgpName::NoiseBlock,
      DgpName::Correlated,   DgpName::Friedman1,   DgpName::Friedman2,  DgpName::Friedman3,
      DgpName::Xor,          DgpName::Threshold,   DgpName::ConditionalNull,
  };
  return names;
}

std::size_t dgp_index(DgpName name) { return static_cast<std::size_t>(name); }

DgpSpec dgp_spec(DgpName name, std::size_t n) {
  const DgpDef& def = definition(name);
  return DgpSpec{name, n, def.p, def.relevant, def.noise_sd};
}

DgpInstance generate(DgpName name, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("generate needs n >= 2");
  const DgpDef& def = definition(name);
  DgpSpec spec = dgp_spec(name, n);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(def.p);

  Matrix x(rows, cols);
  Vector y(rows);
  std::vector<double> row(def.p);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < def.p; ++j) {
      row[j] = def.marginal == Marginal::Normal ? rng.normal() : rng.uniform();
    }
    if (has_correlated_pair(name)) row[1] = row[0] + kPairNoiseSd * rng.normal();
    const double eps = def.noise_sd > 0 ? def.noise_sd * rng.normal() : 0.0;
    y(i) = response(name, row, eps);
    for (std::size_t j = 0; j < def.p; ++j) x(i, static_cast<Eigen::Index>(j)) = row[j];
  }

  const FeatureKind target_kind =
      name == DgpName::Xor ? FeatureKind::categorical(2) : FeatureKind::continuous();
  Dataset data(std::move(x), std::vector<FeatureKind>(def.p, FeatureKind::continuous()),
               std::move(y), target_kind);
  return DgpInstance{std::move(data), std::move(spec)};
}

double oracle_conditional(const DgpSpec& spec, std::size_t j,
                          std::span<const double> x_minus_j, std::uint64_t seed) {
  const DgpDef& def = definition(spec.name);
  if (j >= spec.p || spec.p != def.p) {
    throw NoOracleError("no oracle for feature " + std::to_string(j) + " of " +
                        std::string(def.id));
  }
  if (x_minus_j.size() + 1 != spec.p) {
    throw InvalidArgument("oracle expects " + std::to_string(spec.p - 1) +
                          " conditioning values, got " + std::to_string(x_minus_j.size()));
  }
  Rng rng(seed);
  if (has_correlated_pair(spec.name) && j <= 1) {
    const double other = x_minus_j[0];
    const double v = kPairNoiseSd * kPairNoiseSd;
    if (j == 1) return rng.normal(other, kPairNoiseSd);
    // (X1, X2) bivariate normal with Var X1 = 1, Var X2 = 1 + v, Cov = 1.
    return rng.normal(other / (1.0 + v), std::sqrt(1.0 - 1.0 / (1.0 + v)));
  }
  return def.marginal == Marginal::Normal ? rng.normal() : rng.uniform();
}

}  // namespace crt
