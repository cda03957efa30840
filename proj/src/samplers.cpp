#include <algorithm>
#include <cmath>
#include <limits>

#include "crt/models.hpp"

namespace crt {

namespace {

std::vector<double> row_vector(const Matrix& m, Eigen::Index i) {
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
  return row;
}

Matrix single_row(std::span<const double> row) {
  Matrix m(1, static_cast<Eigen::Index>(row.size()));
  for (std::size_t j = 0; j < row.size(); ++j) m(0, static_cast<Eigen::Index>(j)) = row[j];
  return m;
}

// Hazen plotting position: sorted[i] sits at probability (i + 0.5) / k.
double empirical_quantile(std::span<const double> sorted, double tau) {
  const auto k = sorted.size();
  const double h = tau * static_cast<double>(k) - 0.5;
  if (h <= 0.0) return sorted.front();
  if (h >= static_cast<double>(k - 1)) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double w = h - static_cast<double>(lo);
  return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

class GridColumn final : public ConditionedColumn {
 public:
  explicit GridColumn(QuantileGrid grid) : grid_(std::move(grid)) {}
  std::size_t rows() const override { return static_cast<std::size_t>(grid_.values.rows()); }
  double draw(std::size_t row, std::uint64_t seed) const override {
    Rng rng(seed);
    const auto k = rng.below(grid_.levels.size());
    return grid_.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k));
  }

 private:
  QuantileGrid grid_;
};

class ProbabilityColumn final : public ConditionedColumn {
 public:
  explicit ProbabilityColumn(Matrix probs) : probs_(std::move(probs)) {}
  std::size_t rows() const override { return static_cast<std::size_t>(probs_.rows()); }
  double draw(std::size_t row, std::uint64_t seed) const override {
    Rng rng(seed);
    const auto probs = row_vector(probs_, static_cast<Eigen::Index>(row));
    return draw_level(probs, rng.uniform());
  }

 private:
  Matrix probs_;
};

class OracleColumn final : public ConditionedColumn {
 public:
  OracleColumn(const DgpSpec& spec, std::size_t feature, Matrix rows)
      : spec_(spec), feature_(feature), rows_(std::move(rows)) {}
  std::size_t rows() const override { return static_cast<std::size_t>(rows_.rows()); }
  double draw(std::size_t row, std::uint64_t seed) const override {
    const auto x = row_vector(rows_, static_cast<Eigen::Index>(row));
    return oracle_conditional(spec_, feature_, x, seed);
  }

 private:
  DgpSpec spec_;
  std::size_t feature_;
  Matrix rows_;
};

}  // namespace

double ConditionalSampler::sample(std::span<const double> x_minus_j, std::uint64_t seed) const {
  return condition(single_row(x_minus_j))->draw(0, seed);
}

// ---------------------------------------------------------------------------
// Quantile grid
// ---------------------------------------------------------------------------

std::vector<double> QuantileGrid::midpoint_levels(std::size_t k) {
  if (k < 2) throw InvalidArgument("quantile grid needs K >= 2");
  std::vector<double> levels(k);
  for (std::size_t i = 0; i < k; ++i) {
    levels[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
  }
  return levels;
}

void QuantileGrid::clamp_monotone() {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index k = 1; k < values.cols(); ++k) {
      values(i, k) = std::max(values(i, k), values(i, k - 1));
    }
  }
}

bool QuantileGrid::is_monotone() const {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index k = 1; k < values.cols(); ++k) {
      if (values(i, k) < values(i, k - 1)) return false;
    }
  }
  return true;
}

KnnQuantileEstimator::KnnQuantileEstimator(const Matrix& x_minus_j, const Vector& x_j,
                                           std::optional<std::size_t> k)
    : index_(x_minus_j), x_j_(x_j), k_(0) {
  const std::size_t n = index_.size();
  if (static_cast<std::size_t>(x_j.size()) != n) {
    throw InvalidArgument("quantile estimator: row count mismatch");
  }
  if (k) {
    if (*k < 1 || *k > n) throw InvalidArgument("quantile estimator: k outside [1, n_train]");
    k_ = *k;
    return;
  }
  if (n < 2) {
    k_ = 1;
    return;
  }

  std::vector<std::size_t> candidates;
  for (std::size_t c = default_neighbor_count(n); c < n - 1; c *= 2) candidates.push_back(c);
  candidates.push_back(n - 1);

  std::vector<double> loss(candidates.size(), 0.0);
  std::vector<double> prefix(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ranked = index_.ranked_without(i);
    double running = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      running += x_j_(static_cast<Eigen::Index>(ranked[r]));
      prefix[r] = running;
    }
    const double target = x_j_(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double mean = prefix[candidates[c] - 1] / static_cast<double>(candidates[c]);
      loss[c] += (target - mean) * (target - mean);
    }
  }
  k_ = candidates[static_cast<std::size_t>(
      std::min_element(loss.begin(), loss.end()) - loss.begin())];
}

Matrix KnnQuantileEstimator::predict(const Matrix& x_minus_j,
                                     std::span<const double> levels) const {
  Matrix out(x_minus_j.rows(), static_cast<Eigen::Index>(levels.size()));
  std::vector<double> values(k_);
  for (Eigen::Index i = 0; i < x_minus_j.rows(); ++i) {
    const auto nn = index_.nearest(row_vector(x_minus_j, i), k_);
    for (std::size_t r = 0; r < k_; ++r) values[r] = x_j_(static_cast<Eigen::Index>(nn[r]));
    std::sort(values.begin(), values.end());
    for (std::size_t l = 0; l < levels.size(); ++l) {
      out(i, static_cast<Eigen::Index>(l)) = empirical_quantile(values, levels[l]);
    }
  }
  return out;
}

Matrix FunctionQuantileEstimator::predict(const Matrix& x_minus_j,
                                          std::span<const double> levels) const {
  Matrix out(x_minus_j.rows(), static_cast<Eigen::Index>(levels.size()));
  for (std::size_t l = 0; l < levels.size(); ++l) {
    out.col(static_cast<Eigen::Index>(l)).setConstant(inverse_cdf_(levels[l]));
  }
  return out;
}

QuantileGridSampler::QuantileGridSampler(std::unique_ptr<QuantileEstimator> estimator,
                                         std::size_t grid_size)
    : estimator_(std::move(estimator)), levels_(QuantileGrid::midpoint_levels(grid_size)) {}

QuantileGrid QuantileGridSampler::grid(const Matrix& x_minus_j) const {
  QuantileGrid grid{levels_, estimator_->predict(x_minus_j, levels_)};
  if (!grid.values.allFinite()) throw Error("quantile estimator produced non-finite values");
  grid.clamp_monotone();
  return grid;
}

std::unique_ptr<ConditionedColumn> QuantileGridSampler::condition(const Matrix& x_minus_j) const {
  return std::make_unique<GridColumn>(grid(x_minus_j));
}

std::unique_ptr<ConditionalSampler> fit_quantile_grid_sampler(const Matrix& x_minus_j,
                                                              const Vector& x_j,
                                                              const FeatureKind& kind,
                                                              std::size_t grid_size,
                                                              std::optional<std::size_t> k) {
  if (kind.is_categorical()) {
    throw InvalidArgument("quantile grid sampler needs a continuous column; "
                          "use the categorical sampler");
  }
  return std::make_unique<QuantileGridSampler>(
      std::make_unique<KnnQuantileEstimator>(x_minus_j, x_j, k), grid_size);
}

// ---------------------------------------------------------------------------
// Categorical
// ---------------------------------------------------------------------------

KnnClassEstimator::KnnClassEstimator(const Matrix& x_minus_j, const Vector& x_j, int levels,
                                     std::size_t k)
    : index_(x_minus_j), x_j_(x_j), levels_(levels), k_(k) {
  if (static_cast<std::size_t>(x_j.size()) != index_.size()) {
    throw InvalidArgument("class estimator: row count mismatch");
  }
  if (k < 1 || k > index_.size()) throw InvalidArgument("class estimator: k outside [1, n_train]");
  const FeatureKind kind = FeatureKind::categorical(levels);
  for (Eigen::Index i = 0; i < x_j.size(); ++i) check_value(x_j(i), kind, "column");
}

Matrix KnnClassEstimator::predict(const Matrix& x_minus_j) const {
  Matrix out(x_minus_j.rows(), levels_);
  const double total = static_cast<double>(k_) + levels_;
  for (Eigen::Index i = 0; i < x_minus_j.rows(); ++i) {
    out.row(i).setOnes();
    for (const std::size_t r : index_.nearest(row_vector(x_minus_j, i), k_)) {
      out(i, static_cast<Eigen::Index>(x_j_(static_cast<Eigen::Index>(r)))) += 1.0;
    }
    out.row(i) /= total;
  }
  return out;
}

int draw_level(std::span<const double> probabilities, double u) {
  if (probabilities.empty()) throw InvalidArgument("draw_level: empty probability vector");
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t l = 0; l < probabilities.size(); ++l) {
    if (probabilities[l] <= 0.0) continue;
    cumulative += probabilities[l];
    last_positive = static_cast<int>(l);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

CategoricalSampler::CategoricalSampler(std::unique_ptr<ClassProbabilityEstimator> estimator,
                                       FeatureKind kind)
    : estimator_(std::move(estimator)), kind_(kind) {
  if (kind_.is_continuous()) throw InvalidArgument("categorical sampler needs a categorical column");
}

std::unique_ptr<ConditionedColumn> CategoricalSampler::condition(const Matrix& x_minus_j) const {
  Matrix probs = estimator_->predict(x_minus_j);
  if (probs.cols() != kind_.levels()) {
    throw Error("class estimator returned " + std::to_string(probs.cols()) + " levels, expected " +
                std::to_string(kind_.levels()));
  }
  return std::make_unique<ProbabilityColumn>(std::move(probs));
}

std::unique_ptr<ConditionalSampler> fit_categorical_sampler(const Matrix& x_minus_j,
                                                            const Vector& x_j,
                                                            const FeatureKind& kind,
                                                            std::optional<std::size_t> k) {
  if (kind.is_continuous()) {
    throw InvalidArgument("categorical sampler needs a categorical column; "
                          "use the quantile grid sampler");
  }
  const std::size_t neighbors =
      k.value_or(default_neighbor_count(static_cast<std::size_t>(x_j.size())));
  return std::make_unique<CategoricalSampler>(
      std::make_unique<KnnClassEstimator>(x_minus_j, x_j, kind.levels(), neighbors), kind);
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

OracleSampler::OracleSampler(DgpSpec spec, std::size_t feature)
    : spec_(std::move(spec)), feature_(feature) {
  if (feature_ >= spec_.p) {
    throw NoOracleError("no oracle for feature " + std::to_string(feature_) + " of " +
                        std::string(dgp_id(spec_.name)));
  }
}

std::unique_ptr<ConditionedColumn> OracleSampler::condition(const Matrix& x_minus_j) const {
  if (static_cast<std::size_t>(x_minus_j.cols()) + 1 != spec_.p) {
    throw InvalidArgument("oracle sampler: conditioning block has the wrong width");
  }
  return std::make_unique<OracleColumn>(spec_, feature_, x_minus_j);
}

}  // namespace crt
