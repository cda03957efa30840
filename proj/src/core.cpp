#include "crt/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace crt {

FeatureKind::FeatureKind(Categorical c) : kind_(c) {
  if (c.levels < 2) {
    throw InvalidArgument("categorical feature needs at least 2 levels, got " +
                          std::to_string(c.levels));
  }
}

int FeatureKind::levels() const {
  if (const auto* c = std::get_if<Categorical>(&kind_)) return c->levels;
  return 0;
}

std::string FeatureKind::to_string() const {
  if (is_continuous()) return "continuous";
  return "categorical:" + std::to_string(levels());
}

FeatureKind FeatureKind::parse(const std::string& text) {
  if (text == "continuous") return Continuous{};
  const std::string prefix = "categorical:";
  if (text.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const std::string rest = text.substr(prefix.size());
      const int levels = std::stoi(rest, &used);
      if (used == rest.size()) return Categorical{levels};
    } catch (const std::logic_error&) {
    }
  }
  throw InvalidArgument("unrecognised feature kind '" + text + "'");
}

void check_value(double value, const FeatureKind& kind, const char* what) {
  if (!std::isfinite(value)) {
    throw InvalidArgument(std::string("non-finite value in ") + what);
  }
  if (kind.is_categorical()) {
    if (value != std::floor(value) || value < 0 || value >= kind.levels()) {
      throw InvalidArgument(std::string("categorical ") + what + " entry " +
                            std::to_string(value) + " outside [0, " +
                            std::to_string(kind.levels()) + ")");
    }
  }
}

Dataset::Dataset(Matrix features, std::vector<FeatureKind> kinds, Vector target,
                 FeatureKind target_kind)
    : Dataset(std::move(features), std::move(kinds), std::move(target), target_kind, 2) {}

Dataset::Dataset(Matrix features, std::vector<FeatureKind> kinds, Vector target,
                 FeatureKind target_kind, std::size_t min_rows)
    : features_(std::move(features)),
      kinds_(std::move(kinds)),
      target_(std::move(target)),
      target_kind_(target_kind) {
  if (n() < min_rows) {
    throw InvalidArgument("dataset needs at least " + std::to_string(min_rows) + " rows");
  }
  if (features_.cols() < 1) throw InvalidArgument("dataset needs at least 1 feature");
  if (kinds_.size() != p()) {
    throw InvalidArgument("kinds list has " + std::to_string(kinds_.size()) +
                          " entries for " + std::to_string(p()) + " features");
  }
  if (static_cast<std::size_t>(target_.size()) != n()) {
    throw InvalidArgument("target has " + std::to_string(target_.size()) +
                          " entries for " + std::to_string(n()) + " rows");
  }
  for (std::size_t j = 0; j < p(); ++j) {
    for (std::size_t i = 0; i < n(); ++i) {
      check_value(features_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                  kinds_[j], "feature");
    }
  }
  for (std::size_t i = 0; i < n(); ++i) {
    check_value(target_(static_cast<Eigen::Index>(i)), target_kind_, "target");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Matrix x(m, features_.cols());
  Vector y(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    if (src >= features_.rows()) throw InvalidArgument("subset row index out of range");
    x.row(r) = features_.row(src);
    y(r) = target_(src);
  }
  return Dataset(std::move(x), kinds_, std::move(y), target_kind_, 1);
}

Matrix drop_column(const Matrix& m, std::size_t j) {
  const auto cols = m.cols();
  const auto jj = static_cast<Eigen::Index>(j);
  if (jj >= cols) throw InvalidArgument("drop_column index out of range");
  Matrix out(m.rows(), cols - 1);
  out.leftCols(jj) = m.leftCols(jj);
  out.rightCols(cols - jj - 1) = m.rightCols(cols - jj - 1);
  return out;
}

void CrtConfig::validate() const {
  if (num_null_draws < 1) throw InvalidArgument("num_null_draws must be >= 1");
  if (quantile_grid_size < 2) throw InvalidArgument("quantile_grid_size must be >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw InvalidArgument("split_fraction must lie in (0, 1)");
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::span<const std::uint64_t> path) {
  std::uint64_t h = splitmix64_mix(master + 0x9e3779b97f4a7c15ULL);
  for (const std::uint64_t element : path) {
    h = splitmix64_mix(h ^ splitmix64_mix(element + 0x6a09e667f3bcc909ULL));
  }
  return h;
}

double Rng::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  const std::uint64_t limit = max() - max() % bound;
  std::uint64_t draw = (*this)();
  while (draw >= limit) draw = (*this)();
  return draw % bound;
}

SplitIndices split_dataset(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidArgument("split fraction must lie in (0, 1)");
  }
  const std::size_t n = data.n();
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n_train < 1 || n - n_train < 1) {
    throw InvalidArgument("degenerate split: " + std::to_string(n_train) + " train rows of " +
                          std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

}  // namespace crt
