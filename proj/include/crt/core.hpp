#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace crt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Feature kinds
// ---------------------------------------------------------------------------

struct Continuous {
  friend bool operator==(const Continuous&, const Continuous&) = default;
};

struct Categorical {
  int levels = 2;
  friend bool operator==(const Categorical&, const Categorical&) = default;
};

class FeatureKind {
 public:
  FeatureKind() = default;
  FeatureKind(Continuous c) : kind_(c) {}
  FeatureKind(Categorical c);

  static FeatureKind continuous() { return Continuous{}; }
  static FeatureKind categorical(int levels) { return Categorical{levels}; }

  bool is_continuous() const { return std::holds_alternative<Continuous>(kind_); }
  bool is_categorical() const { return !is_continuous(); }
  // Number of levels; 0 for continuous columns.
  int levels() const;

  std::string to_string() const;
  static FeatureKind parse(const std::string& text);

  friend bool operator==(const FeatureKind&, const FeatureKind&) = default;

 private:
  std::variant<Continuous, Categorical> kind_;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Column-major feature matrix with per-column kinds plus a target column.
/// Categorical entries are stored as level indices 0..levels-1. A Dataset is
/// validated on construction and immutable afterwards.
class Dataset {
 public:
  Dataset(Matrix features, std::vector<FeatureKind> kinds, Vector target,
          FeatureKind target_kind);

  const Matrix& features() const { return features_; }
  const std::vector<FeatureKind>& kinds() const { return kinds_; }
  const Vector& target() const { return target_; }
  const FeatureKind& target_kind() const { return target_kind_; }
  std::size_t n() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(features_.cols()); }

  // Rows selected by index, in the given order. A fold may hold a single row.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  Dataset(Matrix features, std::vector<FeatureKind> kinds, Vector target,
          FeatureKind target_kind, std::size_t min_rows);

  Matrix features_;
  std::vector<FeatureKind> kinds_;
  Vector target_;
  FeatureKind target_kind_;
};

// Throws InvalidArgument unless `value` is a valid entry for `kind`.
void check_value(double value, const FeatureKind& kind, const char* what);

// Matrix with column j removed.
Matrix drop_column(const Matrix& m, std::size_t j);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

struct CrtConfig {
  std::size_t num_null_draws = 1000;
  std::size_t quantile_grid_size = 200;
  double alpha = 0.05;
  double split_fraction = 0.8;
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct CrtResult {
  std::size_t feature_index = 0;
  double t_obs = 0.0;
  std::vector<double> t_null;
  double p_value = 1.0;
};

// ---------------------------------------------------------------------------
// Seeding and random numbers
// ---------------------------------------------------------------------------

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Mixes `master` with a hierarchical path (repeat, feature, draw, ...).
/// Each element is folded in sequence, so the path is order sensitive.
std::uint64_t derive_seed(std::uint64_t master, std::span<const std::uint64_t> path);

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  return derive_seed(master, std::span<const std::uint64_t>(path.begin(), path.size()));
}

/// SplitMix64 stream. Satisfies UniformRandomBitGenerator; the uniform and
/// normal transforms are defined here so that draws are identical across
/// standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

 private:
  std::uint64_t state_;
};

/// Uniformly random partition with |train| = floor(fraction * n).
SplitIndices split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace crt
