#include "crt/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "crt/io.hpp"
#include "crt/parallel.hpp"

namespace crt {

namespace {

constexpr std::string_view kDash = "—";

struct CellOutcome {
  std::optional<FeatureTestReport> report;
  std::string failure;
};

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::size_t display_width(std::string_view s) {
  std::size_t w = 0;
  for (const char c : s) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++w;
  }
  return w;
}

}  // namespace

ModelChoice recommended_model(DgpName name) {
  switch (name) {
    case DgpName::Friedman1:
    case DgpName::Friedman2:
    case DgpName::Friedman3:
    case DgpName::AdditiveInteraction:
    case DgpName::Threshold:
      return ModelChoice{ModelKind::Quadratic};
    case DgpName::Xor:
      return ModelChoice{ModelKind::Knn};
    default:
      return ModelChoice{ModelKind::LinearGaussian};
  }
}

void ExperimentConfig::validate() const {
  crt.validate();
  if (datasets.empty()) throw InvalidArgument("experiment needs at least one dataset");
  if (n_repeats < 1) throw InvalidArgument("n_repeats must be >= 1");
  if (n < 2) throw InvalidArgument("experiment needs n >= 2");
  const bool external = (!model.automatic && model.choice.kind == ModelKind::External) ||
                        sampler == SamplerKind::External;
  if (external && !bridge) throw InvalidArgument("external model or sampler needs a worker");
}

bool ExperimentReport::has_failures() const {
  return std::any_of(rows.begin(), rows.end(), [](const DatasetRow& r) { return !r.failures.empty(); });
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::size_t repeats = config.n_repeats;
  const std::size_t cells = config.datasets.size() * repeats;
  std::vector<CellOutcome> outcomes(cells);

  parallel_for(cells, config.threads, [&](std::size_t cell) {
    const DgpName name = config.datasets[cell / repeats];
    const std::size_t repeat = cell % repeats;
    const std::uint64_t repeat_seed =
        derive_seed(config.crt.master_seed, {dgp_index(name), repeat});
    try {
      const DgpInstance instance = generate(name, config.n, derive_seed(repeat_seed, {0}));

      CrtConfig crt_config = config.crt;
      crt_config.master_seed = derive_seed(repeat_seed, {1});

      ModelChoice model = config.model.automatic ? recommended_model(name) : config.model.choice;
      if (model.kind == ModelKind::External) model.bridge = config.bridge;
      SamplerChoice sampler{config.sampler};
      sampler.oracle = instance.spec;
      sampler.bridge = config.bridge;

      outcomes[cell].report = test_all_features(instance.data, crt_config, model, sampler);
    } catch (const BridgeError&) {
      throw;
    } catch (const std::exception& e) {
      outcomes[cell].failure = e.what();
    }
  });

  ExperimentReport report;
  for (std::size_t d = 0; d < config.datasets.size(); ++d) {
    const DgpName name = config.datasets[d];
    const DgpSpec spec = dgp_spec(name, config.n);
    DatasetRow row{name, spec.p, spec.relevant_set.size()};
    std::size_t power_hits = 0;
    std::size_t type1_hits = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
      const CellOutcome& outcome = outcomes[d * repeats + r];
      if (!outcome.report) {
        row.failures.push_back("repeat " + std::to_string(r) + ": " + outcome.failure);
        continue;
      }
      for (const FeatureError& e : outcome.report->errors) {
        row.failures.push_back("repeat " + std::to_string(r) + ", feature " +
                               std::to_string(e.feature_index) + ": " + e.message);
      }
      for (const CrtResult& res : outcome.report->results) {
        const bool reject = res.p_value <= config.crt.alpha;
        const TaggedPValue tagged{name, r, res.feature_index, res.p_value};
        if (spec.is_relevant(res.feature_index)) {
          ++row.relevant_cells;
          power_hits += reject ? 1 : 0;
          report.relevant.push_back(tagged);
        } else {
          ++row.irrelevant_cells;
          type1_hits += reject ? 1 : 0;
          report.irrelevant.push_back(tagged);
        }
      }
    }
    if (row.relevant_cells > 0) {
      row.power = static_cast<double>(power_hits) / static_cast<double>(row.relevant_cells);
    }
    if (row.irrelevant_cells > 0) {
      row.type1 = static_cast<double>(type1_hits) / static_cast<double>(row.irrelevant_cells);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

Curve ecdf(std::span<const double> p_values) {
  if (p_values.empty()) throw InvalidArgument("ecdf needs at least one value");
  std::vector<double> sorted(p_values.begin(), p_values.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  Curve out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out.emplace_back(sorted[i], static_cast<double>(i + 1) / m);
  }
  return out;
}

Curve qq_uniform(std::span<const double> p_values) {
  if (p_values.empty()) throw InvalidArgument("qq_uniform needs at least one value");
  std::vector<double> sorted(p_values.begin(), p_values.end());
  std::sort(sorted.begin(), sorted.end());
  const double denom = static_cast<double>(sorted.size() + 1);
  Curve out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    out.emplace_back(static_cast<double>(i + 1) / denom, sorted[i]);
  }
  return out;
}

std::vector<double> p_values_of(std::span<const TaggedPValue> tagged) {
  std::vector<double> out;
  out.reserve(tagged.size());
  for (const auto& t : tagged) out.push_back(t.p_value);
  return out;
}

std::vector<TableRow> table_report(const ExperimentReport& report) {
  std::vector<TableRow> rows;
  for (const DatasetRow& r : report.rows) {
    TableRow row;
    row.dataset = std::string(dgp_label(r.name));
    row.p = std::to_string(r.p);
    row.relevant = std::to_string(r.relevant);
    row.power = r.power_defined() ? fixed2(r.power) : std::string(kDash);
    row.type1_vacuous = !r.type1_defined();
    row.type1 = row.type1_vacuous ? std::string(kDash) : fixed2(r.type1);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_table(std::span<const TableRow> rows) {
  const std::vector<std::string> header = {"Dataset", "p", "|R|", "Power", "Type-I Error"};
  std::vector<std::vector<std::string>> cells = {header};
  bool footnote = false;
  for (const TableRow& r : rows) {
    cells.push_back({r.dataset, r.p, r.relevant, r.power, r.type1 + (r.type1_vacuous ? "*" : "")});
    footnote = footnote || r.type1_vacuous;
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_width(line[c]));
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::size_t pad = width[c] - display_width(line[c]);
      if (c == 0) {
        out << line[c] << std::string(pad, ' ');
      } else {
        out << "  " << std::string(pad, ' ') << line[c];
      }
    }
    out << '\n';
  }
  if (footnote) out << "* no irrelevant features; type-I error is undefined\n";
  return out.str();
}

std::string table_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "dataset,p,relevant,power,type1,relevant_cells,irrelevant_cells,failures\n";
  for (const DatasetRow& r : report.rows) {
    out << dgp_id(r.name) << ',' << r.p << ',' << r.relevant << ','
        << (r.power_defined() ? format_double(r.power) : "") << ','
        << (r.type1_defined() ? format_double(r.type1) : "") << ',' << r.relevant_cells << ','
        << r.irrelevant_cells << ',' << r.failures.size() << '\n';
  }
  return out.str();
}

std::string curve_csv(const Curve& curve, std::string_view x_name, std::string_view y_name) {
  std::ostringstream out;
  out << x_name << ',' << y_name << '\n';
  for (const auto& [x, y] : curve) out << format_double(x) << ',' << format_double(y) << '\n';
  return out.str();
}

nlohmann::json report_json(const ExperimentReport& report) {
  using nlohmann::json;
  json rows = json::array();
  for (const DatasetRow& r : report.rows) {
    rows.push_back({{"dataset", dgp_id(r.name)},
                    {"label", dgp_label(r.name)},
                    {"p", r.p},
                    {"relevant", r.relevant},
                    {"power", r.power_defined() ? json(r.power) : json(nullptr)},
                    {"type1", r.type1_defined() ? json(r.type1) : json(nullptr)},
                    {"type1_defined", r.type1_defined()},
                    {"relevant_cells", r.relevant_cells},
                    {"irrelevant_cells", r.irrelevant_cells},
                    {"failures", r.failures}});
  }
  auto tagged = [](std::span<const TaggedPValue> values) {
    json out = json::array();
    for (const auto& t : values) {
      out.push_back({{"dataset", dgp_id(t.dataset)},
                     {"repeat", t.repeat},
                     {"feature", t.feature},
                     {"p_value", t.p_value}});
    }
    return out;
  };
  return {{"rows", rows},
          {"p_values", {{"relevant", tagged(report.relevant)}, {"irrelevant", tagged(report.irrelevant)}}}};
}

}  // namespace crt
