#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "crt/core.hpp"
#include "crt/dgp.hpp"

namespace crt {

// ---------------------------------------------------------------------------
// Predictive models for p(y | x)
// ---------------------------------------------------------------------------

/// A fitted predictive distribution for the target. Implementations are
/// immutable after construction, so concurrent log_density calls are safe.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;

  /// Log predictive density (nats) of `y` at feature row `x`. For categorical
  /// targets this is the log probability of level `y`.
  virtual double log_density(std::span<const double> x, double y) const = 0;

  /// Per-row log densities for a whole block of rows.
  virtual std::vector<double> log_densities(const Matrix& x, const Vector& y) const;
};

constexpr double kLinearVarianceFloor = 1e-12;
constexpr double kKnnVarianceFloor = 1e-6;

enum class Basis { Linear, Quadratic };

/// Least squares mean with intercept and a Gaussian predictive. The quadratic
/// basis adds squares and pairwise products of the features. A rank-deficient
/// design falls back to ridge with penalty 1e-6 * trace(X'X) / p.
class LinearGaussianModel final : public PredictiveModel {
 public:
  LinearGaussianModel(const Matrix& x, const Vector& y, const FeatureKind& target_kind,
                      Basis basis = Basis::Linear);

  double log_density(std::span<const double> x, double y) const override;
  std::vector<double> log_densities(const Matrix& x, const Vector& y) const override;

  double predict_mean(std::span<const double> x) const;
  double residual_variance() const { return variance_; }
  bool used_ridge() const { return used_ridge_; }
  const Vector& coefficients() const { return beta_; }

 private:
  Matrix design(const Matrix& x) const;

  Basis basis_;
  Vector beta_;
  double variance_ = 1.0;
  bool used_ridge_ = false;
};

std::unique_ptr<PredictiveModel> fit_linear_gaussian(const Matrix& x, const Vector& y,
                                                     const FeatureKind& target_kind);
std::unique_ptr<PredictiveModel> fit_quadratic_gaussian(const Matrix& x, const Vector& y,
                                                        const FeatureKind& target_kind);

/// Brute-force Euclidean neighbours on features z-scored with training
/// statistics. Ties in distance resolve to the lower training index.
class KnnIndex {
 public:
  explicit KnnIndex(const Matrix& train);

  std::size_t size() const { return n_; }
  std::size_t dims() const { return d_; }

  // Indices of the k nearest training rows, ordered by (distance, index).
  std::vector<std::size_t> nearest(std::span<const double> query, std::size_t k) const;
  // All training rows ordered by distance to training row i, excluding i.
  std::vector<std::size_t> ranked_without(std::size_t i) const;

 private:
  void standardize(std::span<const double> query, std::vector<double>& out) const;
  std::vector<std::pair<double, std::size_t>> distances(std::span<const double> z,
                                                        std::optional<std::size_t> skip) const;

  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<double> rows_;  // row-major, standardized
};

std::size_t default_neighbor_count(std::size_t n_train);

/// k-NN predictive: local Gaussian for continuous targets, Laplace-smoothed
/// class frequencies (count + 1) / (k + L) for categorical targets.
class KnnModel final : public PredictiveModel {
 public:
  KnnModel(const Matrix& x, const Vector& y, const FeatureKind& target_kind, std::size_t k);

  double log_density(std::span<const double> x, double y) const override;
  std::vector<double> class_probabilities(std::span<const double> x) const;

 private:
  KnnIndex index_;
  Vector y_;
  FeatureKind kind_;
  std::size_t k_;
};

std::unique_ptr<PredictiveModel> fit_knn_model(const Matrix& x, const Vector& y,
                                               const FeatureKind& target_kind, std::size_t k);

// ---------------------------------------------------------------------------
// Conditional samplers for p(x_j | x_{-j})
// ---------------------------------------------------------------------------

/// Conditional distributions of X_j for a fixed block of rows, ready for
/// repeated draws. draw() is a pure function of (row, seed).
class ConditionedColumn {
 public:
  virtual ~ConditionedColumn() = default;
  virtual std::size_t rows() const = 0;
  virtual double draw(std::size_t row, std::uint64_t seed) const = 0;
};

class ConditionalSampler {
 public:
  virtual ~ConditionalSampler() = default;

  virtual const FeatureKind& kind() const = 0;
  virtual std::unique_ptr<ConditionedColumn> condition(const Matrix& x_minus_j) const = 0;

  // Single draw for one row; equal to condition(row)->draw(0, seed).
  double sample(std::span<const double> x_minus_j, std::uint64_t seed) const;
};

/// K predicted quantiles per row at levels tau_k = (k - 0.5) / K.
struct QuantileGrid {
  std::vector<double> levels;
  Matrix values;  // rows x K

  static std::vector<double> midpoint_levels(std::size_t k);
  // Running maximum along each row; repairs quantile crossing.
  void clamp_monotone();
  bool is_monotone() const;
};

class QuantileEstimator {
 public:
  virtual ~QuantileEstimator() = default;
  // rows x levels.size() matrix of conditional quantiles.
  virtual Matrix predict(const Matrix& x_minus_j, std::span<const double> levels) const = 0;
};

/// Empirical quantiles of the X_j values of the nearest training rows. When
/// no neighbour count is given it is chosen by leave-one-out squared error of
/// the neighbourhood mean over ceil(sqrt(n)) * 2^i, capped at n_train - 1.
class KnnQuantileEstimator final : public QuantileEstimator {
 public:
  KnnQuantileEstimator(const Matrix& x_minus_j, const Vector& x_j,
                       std::optional<std::size_t> k = std::nullopt);

  Matrix predict(const Matrix& x_minus_j, std::span<const double> levels) const override;
  std::size_t neighbor_count() const { return k_; }

 private:
  KnnIndex index_;
  Vector x_j_;
  std::size_t k_;
};

/// Row-independent quantiles from a closed-form inverse CDF.
class FunctionQuantileEstimator final : public QuantileEstimator {
 public:
  explicit FunctionQuantileEstimator(std::function<double(double)> inverse_cdf)
      : inverse_cdf_(std::move(inverse_cdf)) {}
  Matrix predict(const Matrix& x_minus_j, std::span<const double> levels) const override;

 private:
  std::function<double(double)> inverse_cdf_;
};

/// Discretised inverse-CDF sampling: pick a grid index uniformly and return
/// that row's quantile.
class QuantileGridSampler final : public ConditionalSampler {
 public:
  QuantileGridSampler(std::unique_ptr<QuantileEstimator> estimator, std::size_t grid_size);

  const FeatureKind& kind() const override { return kind_; }
  std::unique_ptr<ConditionedColumn> condition(const Matrix& x_minus_j) const override;
  QuantileGrid grid(const Matrix& x_minus_j) const;

 private:
  std::unique_ptr<QuantileEstimator> estimator_;
  std::vector<double> levels_;
  FeatureKind kind_ = FeatureKind::continuous();
};

std::unique_ptr<ConditionalSampler> fit_quantile_grid_sampler(
    const Matrix& x_minus_j, const Vector& x_j, const FeatureKind& kind, std::size_t grid_size,
    std::optional<std::size_t> k = std::nullopt);

class ClassProbabilityEstimator {
 public:
  virtual ~ClassProbabilityEstimator() = default;
  // rows x L matrix; each row sums to one.
  virtual Matrix predict(const Matrix& x_minus_j) const = 0;
};

class KnnClassEstimator final : public ClassProbabilityEstimator {
 public:
  KnnClassEstimator(const Matrix& x_minus_j, const Vector& x_j, int levels, std::size_t k);
  Matrix predict(const Matrix& x_minus_j) const override;

 private:
  KnnIndex index_;
  Vector x_j_;
  int levels_;
  std::size_t k_;
};

/// Inverse CDF on a uniform variate over a probability vector.
int draw_level(std::span<const double> probabilities, double u);

class CategoricalSampler final : public ConditionalSampler {
 public:
  CategoricalSampler(std::unique_ptr<ClassProbabilityEstimator> estimator, FeatureKind kind);

  const FeatureKind& kind() const override { return kind_; }
  std::unique_ptr<ConditionedColumn> condition(const Matrix& x_minus_j) const override;

 private:
  std::unique_ptr<ClassProbabilityEstimator> estimator_;
  FeatureKind kind_;
};

std::unique_ptr<ConditionalSampler> fit_categorical_sampler(
    const Matrix& x_minus_j, const Vector& x_j, const FeatureKind& kind,
    std::optional<std::size_t> k = std::nullopt);

/// Exact conditional of a synthetic generator.
class OracleSampler final : public ConditionalSampler {
 public:
  OracleSampler(DgpSpec spec, std::size_t feature);

  const FeatureKind& kind() const override { return kind_; }
  std::unique_ptr<ConditionedColumn> condition(const Matrix& x_minus_j) const override;

 private:
  DgpSpec spec_;
  std::size_t feature_;
  FeatureKind kind_ = FeatureKind::continuous();
};

}  // namespace crt
