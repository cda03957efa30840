#include "crt/randomization_test.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crt/parallel.hpp"

namespace crt {

namespace {

// Seed streams under a test's master seed.
enum Stream : std::uint64_t { kSplit = 1, kYModel = 2, kSampler = 3, kDraws = 4 };

Vector column(const Matrix& m, std::size_t j) { return m.col(static_cast<Eigen::Index>(j)); }

}  // namespace

double elpd(const PredictiveModel& model, const Matrix& x, const Vector& y) {
  if (x.rows() == 0) throw InvalidArgument("elpd needs at least one row");
  const auto values = model.log_densities(x, y);
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double mc_pvalue(double t_obs, std::span<const double> t_null) {
  if (t_null.empty()) throw InvalidArgument("mc_pvalue needs at least one null statistic");
  if (!std::isfinite(t_obs)) throw InvalidArgument("mc_pvalue: non-finite observed statistic");
  std::size_t at_least = 0;
  for (const double t : t_null) {
    if (!std::isfinite(t)) throw InvalidArgument("mc_pvalue: non-finite null statistic");
    if (t >= t_obs) ++at_least;
  }
  return static_cast<double>(1 + at_least) / static_cast<double>(t_null.size() + 1);
}

CrtResult run_crt(const TestPlan& plan, unsigned threads) {
  plan.config.validate();
  const std::size_t j = plan.feature_index;
  if (j >= static_cast<std::size_t>(plan.eval_x.cols())) {
    throw InvalidArgument("feature index " + std::to_string(j) + " out of range");
  }
  if (plan.eval_x.rows() != plan.eval_y.size()) {
    throw InvalidArgument("evaluation features and target differ in length");
  }

  CrtResult result;
  result.feature_index = j;
  result.t_obs = elpd(plan.y_model, plan.eval_x, plan.eval_y);
  if (!std::isfinite(result.t_obs)) throw Error("observed statistic is not finite");

  const auto conditioned = plan.sampler.condition(drop_column(plan.eval_x, j));
  const std::size_t rows = static_cast<std::size_t>(plan.eval_x.rows());
  const auto col = static_cast<Eigen::Index>(j);
  const std::size_t draws = plan.config.num_null_draws;
  result.t_null.assign(draws, 0.0);

  parallel_for(draws, threads, [&](std::size_t b) {
    Matrix x = plan.eval_x;
    for (std::size_t i = 0; i < rows; ++i) {
      x(static_cast<Eigen::Index>(i), col) = conditioned->draw(i, derive_seed(plan.draw_seed, {b, i}));
    }
    const double t = elpd(plan.y_model, x, plan.eval_y);
    if (!std::isfinite(t)) throw Error("null statistic for draw " + std::to_string(b) + " is not finite");
    result.t_null[b] = t;
  });

  result.p_value = mc_pvalue(result.t_obs, result.t_null);
  return result;
}

// ---------------------------------------------------------------------------

std::string_view model_kind_id(ModelKind kind) {
  switch (kind) {
    case ModelKind::LinearGaussian: return "linear";
    case ModelKind::Quadratic: return "quadratic";
    case ModelKind::Knn: return "knn";
    case ModelKind::External: return "external";
    case ModelKind::Custom: return "custom";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view id) {
  for (const auto kind : {ModelKind::LinearGaussian, ModelKind::Quadratic, ModelKind::Knn,
                          ModelKind::External}) {
    if (model_kind_id(kind) == id) return kind;
  }
  throw InvalidArgument("unknown Y model '" + std::string(id) + "'");
}

std::string_view sampler_kind_id(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Oracle: return "oracle";
    case SamplerKind::Knn: return "knn";
    case SamplerKind::External: return "external";
    case SamplerKind::Custom: return "custom";
  }
  return "unknown";
}

SamplerKind parse_sampler_kind(std::string_view id) {
  for (const auto kind : {SamplerKind::Oracle, SamplerKind::Knn, SamplerKind::External}) {
    if (sampler_kind_id(kind) == id) return kind;
  }
  throw InvalidArgument("unknown sampler '" + std::string(id) + "'");
}

std::unique_ptr<PredictiveModel> fit_y_model(const ModelChoice& choice, const Dataset& train,
                                             std::uint64_t seed) {
  const Matrix& x = train.features();
  const Vector& y = train.target();
  switch (choice.kind) {
    case ModelKind::LinearGaussian: return fit_linear_gaussian(x, y, train.target_kind());
    case ModelKind::Quadratic: return fit_quadratic_gaussian(x, y, train.target_kind());
    case ModelKind::Knn:
      return fit_knn_model(x, y, train.target_kind(),
                           choice.knn_k.value_or(default_neighbor_count(train.n())));
    case ModelKind::External:
      if (!choice.bridge) throw InvalidArgument("external Y model selected without a worker");
      return std::make_unique<ExternalPredictiveModel>(choice.bridge, x, y, train.target_kind(), seed);
    case ModelKind::Custom:
      if (!choice.custom) throw InvalidArgument("custom Y model selected without a factory");
      return choice.custom(train, seed);
  }
  throw InvalidArgument("unhandled Y model kind");
}

std::unique_ptr<ConditionalSampler> fit_sampler(const SamplerChoice& choice, const Dataset& train,
                                                std::size_t feature, std::size_t grid_size,
                                                std::uint64_t seed) {
  const FeatureKind& kind = train.kinds().at(feature);
  switch (choice.kind) {
    case SamplerKind::Oracle:
      if (!choice.oracle) throw InvalidArgument("oracle sampler requires the generator's truth");
      return std::make_unique<OracleSampler>(*choice.oracle, feature);
    case SamplerKind::Knn: {
      const Matrix rest = drop_column(train.features(), feature);
      const Vector xj = column(train.features(), feature);
      if (kind.is_categorical()) return fit_categorical_sampler(rest, xj, kind, choice.knn_k);
      return fit_quantile_grid_sampler(rest, xj, kind, grid_size, choice.knn_k);
    }
    case SamplerKind::External:
      if (!choice.bridge) throw InvalidArgument("external sampler selected without a worker");
      return std::make_unique<ExternalConditionalSampler>(
          choice.bridge, drop_column(train.features(), feature), column(train.features(), feature),
          kind, grid_size, seed);
    case SamplerKind::Custom:
      if (!choice.custom) throw InvalidArgument("custom sampler selected without a factory");
      return choice.custom(train, feature, seed);
  }
  throw InvalidArgument("unhandled sampler kind");
}

FeatureTestReport test_all_features(const Dataset& data, const CrtConfig& config,
                                    const ModelChoice& model, const SamplerChoice& sampler,
                                    const TestOptions& options) {
  config.validate();
  std::vector<std::size_t> features;
  if (options.features && !options.features->empty()) {
    features = *options.features;
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());
    if (features.back() >= data.p()) {
      throw InvalidArgument("feature index " + std::to_string(features.back()) + " out of range");
    }
  } else {
    features.resize(data.p());
    std::iota(features.begin(), features.end(), std::size_t{0});
  }

  FeatureTestReport report;
  report.split = split_dataset(data, config.split_fraction, derive_seed(config.master_seed, {kSplit}));
  const Dataset train = data.subset(report.split.train);
  const Dataset eval = data.subset(report.split.eval);

  const auto y_model = fit_y_model(model, train, derive_seed(config.master_seed, {kYModel}));
  ++report.y_model_fits;

  for (const std::size_t j : features) {
    try {
      const auto cond = fit_sampler(sampler, train, j, config.quantile_grid_size,
                                    derive_seed(config.master_seed, {kSampler, j}));
      const TestPlan plan{j,
                          config,
                          *y_model,
                          *cond,
                          eval.features(),
                          eval.target(),
                          derive_seed(config.master_seed, {kDraws, j})};
      report.results.push_back(run_crt(plan, options.threads));
    } catch (const BridgeError&) {
      throw;
    } catch (const std::exception& e) {
      report.errors.push_back({j, e.what()});
    }
  }
  return report;
}

}  // namespace crt
