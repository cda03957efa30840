#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "crt/core.hpp"
#include "crt/dgp.hpp"
#include "crt/randomization_test.hpp"

namespace crt {

// Y-model selection for a benchmark run. `Auto` picks per generator.
struct ModelSelection {
  bool automatic = true;
  ModelChoice choice;
};

ModelChoice recommended_model(DgpName name);

struct ExperimentConfig {
  std::vector<DgpName> datasets;
  std::size_t n = 500;
  std::size_t n_repeats = 5;
  CrtConfig crt;
  ModelSelection model;
  SamplerKind sampler = SamplerKind::Oracle;
  std::shared_ptr<BridgeClient> bridge;  // for external model or sampler
  unsigned threads = 1;

  void validate() const;
};

struct TaggedPValue {
  DgpName dataset;
  std::size_t repeat = 0;
  std::size_t feature = 0;
  double p_value = 1.0;
};

struct DatasetRow {
  DgpName name;
  std::size_t p = 0;
  std::size_t relevant = 0;
  double power = 0.0;
  double type1 = 0.0;
  std::size_t relevant_cells = 0;
  std::size_t irrelevant_cells = 0;
  std::vector<std::string> failures;

  // False when the dataset has no irrelevant features (or none were tested).
  bool type1_defined() const { return irrelevant_cells > 0; }
  bool power_defined() const { return relevant_cells > 0; }
};

struct ExperimentReport {
  std::vector<DatasetRow> rows;
  std::vector<TaggedPValue> relevant;
  std::vector<TaggedPValue> irrelevant;

  bool has_failures() const;
};

/// Generates every (dataset, repeat) cell with a derived seed, runs the
/// all-feature test and aggregates rejections at config.crt.alpha
/// (p <= alpha). Failures are recorded per dataset and the run continues.
ExperimentReport run_experiment(const ExperimentConfig& config);

using Curve = std::vector<std::pair<double, double>>;

/// Right-continuous empirical CDF at the sorted unique values.
Curve ecdf(std::span<const double> p_values);

/// (i / (m + 1), p_(i)) pairs for sorted p-values.
Curve qq_uniform(std::span<const double> p_values);

std::vector<double> p_values_of(std::span<const TaggedPValue> tagged);

struct TableRow {
  std::string dataset;
  std::string p;
  std::string relevant;
  std::string power;
  std::string type1;
  bool type1_vacuous = false;
};

std::vector<TableRow> table_report(const ExperimentReport& report);
// Aligned text rendering with a footnote for vacuous type-I cells.
std::string render_table(std::span<const TableRow> rows);

std::string table_csv(const ExperimentReport& report);
std::string curve_csv(const Curve& curve, std::string_view x_name, std::string_view y_name);
nlohmann::json report_json(const ExperimentReport& report);

}  // namespace crt
