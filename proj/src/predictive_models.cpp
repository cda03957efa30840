#include <algorithm>
#include <cmath>
#include <numbers>

#include "crt/models.hpp"

namespace crt {

namespace {

const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_pdf(double y, double mean, double variance) {
  const double r = y - mean;
  return -kHalfLogTwoPi - 0.5 * std::log(variance) - r * r / (2.0 * variance);
}

Eigen::Index basis_width(Eigen::Index p, Basis basis) {
  if (basis == Basis::Linear) return p;
  return p + p + p * (p - 1) / 2;
}

}  // namespace

std::vector<double> PredictiveModel::log_densities(const Matrix& x, const Vector& y) const {
  if (x.rows() != y.size()) throw InvalidArgument("log_densities: row count mismatch");
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    out[static_cast<std::size_t>(i)] = log_density(row, y(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Least squares Gaussian
// ---------------------------------------------------------------------------

LinearGaussianModel::LinearGaussianModel(const Matrix& x, const Vector& y,
                                         const FeatureKind& target_kind, Basis basis)
    : basis_(basis) {
  if (target_kind.is_categorical()) {
    throw InvalidArgument("linear Gaussian model needs a continuous target");
  }
  if (x.rows() != y.size()) throw InvalidArgument("linear Gaussian model: row count mismatch");
  const Eigen::Index q = basis_width(x.cols(), basis);
  if (x.rows() < q + 2) {
    throw InvalidArgument("linear Gaussian model needs at least " + std::to_string(q + 2) +
                          " training rows, got " + std::to_string(x.rows()));
  }

  const Matrix a = design(x);
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() == a.cols()) {
    beta_ = qr.solve(y);
  } else {
    used_ridge_ = true;
    const auto features = a.rightCols(q);
    const double trace = features.squaredNorm();
    const double penalty = std::max(1e-6 * trace / static_cast<double>(x.cols()), 1e-12);
    Matrix gram = a.transpose() * a;
    gram.diagonal().tail(q).array() += penalty;
    beta_ = gram.ldlt().solve(a.transpose() * y);
  }
  const Vector residual = y - a * beta_;
  const double dof = static_cast<double>(x.rows() - q - 1);
  variance_ = std::max(residual.squaredNorm() / dof, kLinearVarianceFloor);
}

Matrix LinearGaussianModel::design(const Matrix& x) const {
  const Eigen::Index p = x.cols();
  Matrix a(x.rows(), 1 + basis_width(p, basis_));
  a.col(0).setOnes();
  a.middleCols(1, p) = x;
  if (basis_ == Basis::Quadratic) {
    Eigen::Index c = 1 + p;
    for (Eigen::Index j = 0; j < p; ++j) a.col(c++) = x.col(j).array().square();
    for (Eigen::Index j = 0; j < p; ++j) {
      for (Eigen::Index k = j + 1; k < p; ++k) a.col(c++) = x.col(j).cwiseProduct(x.col(k));
    }
  }
  return a;
}

double LinearGaussianModel::predict_mean(std::span<const double> x) const {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  if (basis_width(row.cols(), basis_) + 1 != beta_.size()) {
    throw InvalidArgument("feature row has the wrong width for this model");
  }
  return (design(row) * beta_)(0);
}

double LinearGaussianModel::log_density(std::span<const double> x, double y) const {
  return gaussian_log_pdf(y, predict_mean(x), variance_);
}

std::vector<double> LinearGaussianModel::log_densities(const Matrix& x, const Vector& y) const {
  if (x.rows() != y.size()) throw InvalidArgument("log_densities: row count mismatch");
  if (basis_width(x.cols(), basis_) + 1 != beta_.size()) {
    throw InvalidArgument("feature block has the wrong width for this model");
  }
  const Vector mean = design(x) * beta_;
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = gaussian_log_pdf(y(i), mean(i), variance_);
  }
  return out;
}

std::unique_ptr<PredictiveModel> fit_linear_gaussian(const Matrix& x, const Vector& y,
                                                     const FeatureKind& target_kind) {
  return std::make_unique<LinearGaussianModel>(x, y, target_kind, Basis::Linear);
}

std::unique_ptr<PredictiveModel> fit_quadratic_gaussian(const Matrix& x, const Vector& y,
                                                        const FeatureKind& target_kind) {
  return std::make_unique<LinearGaussianModel>(x, y, target_kind, Basis::Quadratic);
}

// ---------------------------------------------------------------------------
// Nearest neighbours
// ---------------------------------------------------------------------------

KnnIndex::KnnIndex(const Matrix& train)
    : n_(static_cast<std::size_t>(train.rows())),
      d_(static_cast<std::size_t>(train.cols())),
      mean_(d_),
      scale_(d_),
      rows_(n_ * d_) {
  if (n_ == 0) throw InvalidArgument("nearest-neighbour index needs training rows");
  for (std::size_t j = 0; j < d_; ++j) {
    const auto col = train.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(n_);
    mean_[j] = mean;
    scale_[j] = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < n_; ++i) {
      rows_[i * d_ + j] = (col(static_cast<Eigen::Index>(i)) - mean) * scale_[j];
    }
  }
}

void KnnIndex::standardize(std::span<const double> query, std::vector<double>& out) const {
  if (query.size() != d_) {
    throw InvalidArgument("query has " + std::to_string(query.size()) + " features, index has " +
                          std::to_string(d_));
  }
  out.resize(d_);
  for (std::size_t j = 0; j < d_; ++j) out[j] = (query[j] - mean_[j]) * scale_[j];
}

std::vector<std::pair<double, std::size_t>> KnnIndex::distances(
    std::span<const double> z, std::optional<std::size_t> skip) const {
  std::vector<std::pair<double, std::size_t>> out;
  out.reserve(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    if (skip && *skip == i) continue;
    const double* r = &rows_[i * d_];
    double s = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      const double diff = r[j] - z[j];
      s += diff * diff;
    }
    out.emplace_back(s, i);
  }
  return out;
}

std::vector<std::size_t> KnnIndex::nearest(std::span<const double> query, std::size_t k) const {
  if (k < 1 || k > n_) {
    throw InvalidArgument("neighbour count " + std::to_string(k) + " outside [1, " +
                          std::to_string(n_) + "]");
  }
  std::vector<double> z;
  standardize(query, z);
  auto d = distances(z, std::nullopt);
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

std::vector<std::size_t> KnnIndex::ranked_without(std::size_t i) const {
  const std::span<const double> z(&rows_[i * d_], d_);
  auto d = distances(z, i);
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) out[r] = d[r].second;
  return out;
}

std::size_t default_neighbor_count(std::size_t n_train) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_train)))));
}

KnnModel::KnnModel(const Matrix& x, const Vector& y, const FeatureKind& target_kind,
                   std::size_t k)
    : index_(x), y_(y), kind_(target_kind), k_(k) {
  if (x.rows() != y.size()) throw InvalidArgument("k-NN model: row count mismatch");
  if (k < 1 || k > index_.size()) {
    throw InvalidArgument("k-NN model: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(index_.size()) + " training rows");
  }
}

std::vector<double> KnnModel::class_probabilities(std::span<const double> x) const {
  if (kind_.is_continuous()) throw InvalidArgument("class probabilities need a categorical target");
  const auto levels = static_cast<std::size_t>(kind_.levels());
  std::vector<double> counts(levels, 1.0);
  for (const std::size_t i : index_.nearest(x, k_)) {
    counts[static_cast<std::size_t>(y_(static_cast<Eigen::Index>(i)))] += 1.0;
  }
  const double total = static_cast<double>(k_ + levels);
  for (double& c : counts) c /= total;
  return counts;
}

double KnnModel::log_density(std::span<const double> x, double y) const {
  if (kind_.is_categorical()) {
    check_value(y, kind_, "target");
    return std::log(class_probabilities(x)[static_cast<std::size_t>(y)]);
  }
  const auto nn = index_.nearest(x, k_);
  double mean = 0.0;
  for (const std::size_t i : nn) mean += y_(static_cast<Eigen::Index>(i));
  mean /= static_cast<double>(k_);
  double var = 0.0;
  for (const std::size_t i : nn) {
    const double r = y_(static_cast<Eigen::Index>(i)) - mean;
    var += r * r;
  }
  var = std::max(var / static_cast<double>(k_), kKnnVarianceFloor);
  return gaussian_log_pdf(y, mean, var);
}

std::unique_ptr<PredictiveModel> fit_knn_model(const Matrix& x, const Vector& y,
                                               const FeatureKind& target_kind, std::size_t k) {
  return std::make_unique<KnnModel>(x, y, target_kind, k);
}

}  // namespace crt
