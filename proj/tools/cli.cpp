#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crt/bridge.hpp"
#include "crt/eval.hpp"
#include "crt/io.hpp"
#include "crt/randomization_test.hpp"

namespace crt::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::string_view kVersion = "0.1.0";

struct GenerateArgs {
  std::string dgp;
  std::size_t n = 500;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth_out;
};

struct CrtArgs {
  std::size_t draws = 1000;
  std::size_t grid = 200;
  double alpha = 0.05;
  double split = 0.8;
  std::uint64_t seed = 0;
  std::string y_model = "auto";
  std::string sampler;
  std::optional<std::size_t> knn_k;
  std::string bridge_cmd;
  double bridge_timeout = 300.0;
  unsigned threads = 1;
};

struct TestArgs {
  CrtArgs crt;
  std::string data;
  std::string truth;
  std::string feature = "all";
  std::string format = "csv";
  std::string target_kind = "auto";
  std::string emit_null;
  std::string out;
};

struct BenchArgs {
  CrtArgs crt;
  std::string suite = "table1";
  std::size_t n = 500;
  std::size_t repeats = 5;
  std::string out_dir;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void add_crt_options(CLI::App* cmd, CrtArgs& a) {
  cmd->add_option("--B", a.draws, "Null draws per feature")->capture_default_str();
  cmd->add_option("--K", a.grid, "Quantile grid size for continuous features")->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "Significance level")->capture_default_str();
  cmd->add_option("--split", a.split, "Training fraction")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Master seed")->capture_default_str();
  cmd->add_option("--y-model", a.y_model, "auto, linear, quadratic, knn or external")
      ->capture_default_str();
  cmd->add_option("--knn-k", a.knn_k, "Neighbour count for k-NN models and samplers");
  cmd->add_option("--bridge-cmd", a.bridge_cmd, "Worker command for external models");
  cmd->add_option("--bridge-timeout", a.bridge_timeout, "Per-call worker timeout in seconds")
      ->capture_default_str();
  cmd->add_option("--threads", a.threads, "Worker threads")->capture_default_str();
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Appends settings from --config (a flat JSON object, or a manifest with a
// "config" member) for every flag not given explicitly.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  json config;
  try {
    config = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (config.contains("config") && config["config"].is_object()) config = config["config"];
  if (!config.is_object()) throw UsageError("config file " + path + " must hold a JSON object");

  std::vector<std::string> merged = args;
  for (const auto& [key, value] : config.items()) {
    const std::string flag = "--" + key;
    if (has_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back(flag);
    } else if (value.is_string()) {
      merged.push_back(flag);
      merged.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      merged.push_back(flag);
      merged.push_back(value.dump());
    } else if (!value.is_null()) {
      throw UsageError("config key '" + key + "' must be a string, number or boolean");
    }
  }
  return merged;
}

CrtConfig crt_config(const CrtArgs& a) {
  CrtConfig c;
  c.num_null_draws = a.draws;
  c.quantile_grid_size = a.grid;
  c.alpha = a.alpha;
  c.split_fraction = a.split;
  c.master_seed = a.seed;
  c.validate();
  return c;
}

std::string bridge_command(const CrtArgs& a) {
  if (!a.bridge_cmd.empty()) return a.bridge_cmd;
  if (const char* env = std::getenv("CRT_BRIDGE_CMD")) return env;
  return {};
}

std::shared_ptr<BridgeClient> connect_if_needed(const CrtArgs& a, bool needed) {
  if (!needed) {
    if (!a.bridge_cmd.empty()) {
      throw UsageError("--bridge-cmd given but neither the Y model nor the sampler is external");
    }
    return nullptr;
  }
  const std::string cmd = bridge_command(a);
  if (cmd.empty()) throw UsageError("external model selected: pass --bridge-cmd or set CRT_BRIDGE_CMD");
  if (!(a.bridge_timeout > 0)) throw UsageError("--bridge-timeout must be positive");
  BridgeOptions options{cmd, std::chrono::milliseconds(static_cast<long long>(a.bridge_timeout * 1000))};
  return std::make_shared<BridgeClient>(options);
}

json crt_args_json(const CrtArgs& a) {
  json j = {{"B", a.draws},          {"K", a.grid},
            {"alpha", a.alpha},      {"split", a.split},
            {"seed", a.seed},        {"y-model", a.y_model},
            {"sampler", a.sampler},  {"bridge-timeout", a.bridge_timeout}};
  if (a.knn_k) j["knn-k"] = *a.knn_k;
  if (!a.bridge_cmd.empty()) j["bridge-cmd"] = a.bridge_cmd;
  return j;
}

// ---------------------------------------------------------------------------

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const DgpName name = parse_dgp(a.dgp);
  const DgpInstance instance = generate(name, a.n, a.seed);
  const fs::path csv = a.out;
  fs::path truth = a.truth_out.empty() ? fs::path(csv).replace_extension(".truth.json") : fs::path(a.truth_out);
  write_dataset_csv(csv, instance.data);
  write_text(truth, truth_json(make_truth(instance, a.seed)).dump(2) + "\n");
  out << "wrote " << csv.string() << " and " << truth.string() << '\n';
  return kSuccess;
}

std::vector<std::size_t> parse_features(const std::string& text, std::size_t p) {
  if (text == "all") return {};
  std::vector<std::size_t> features;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    unsigned long j = 0;
    try {
      j = std::stoul(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw UsageError("--feature expects 'all' or indices, got '" + text + "'");
    if (j >= p) throw UsageError("--feature " + item + " out of range for " + std::to_string(p) + " features");
    features.push_back(j);
  }
  return features;
}

int cmd_test(const TestArgs& a, std::ostream& out, std::ostream& err) {
  const CrtConfig config = crt_config(a.crt);
  const CsvTable table = read_csv(a.data);
  const std::size_t p = table.header.empty() ? 0 : table.header.size() - 1;

  std::optional<TruthFile> truth;
  if (!a.truth.empty()) truth = read_truth(a.truth);
  if (truth && truth->p != p) {
    throw UsageError("truth sidecar describes " + std::to_string(truth->p) + " features, data has " +
                     std::to_string(p));
  }

  FeatureKind target_kind = FeatureKind::continuous();
  if (a.target_kind != "auto") {
    target_kind = FeatureKind::parse(a.target_kind);
  } else if (truth) {
    target_kind = truth->target_kind;
  }
  const Dataset data = dataset_from_table(table, truth ? truth->kinds : std::vector<FeatureKind>{}, target_kind);

  const std::string sampler_id = a.crt.sampler.empty() ? "knn" : a.crt.sampler;
  SamplerChoice sampler{parse_sampler_kind(sampler_id)};
  sampler.knn_k = a.crt.knn_k;
  if (sampler.kind == SamplerKind::Oracle) {
    if (!truth) throw UsageError("oracle requires truth sidecar (--truth)");
    sampler.oracle = truth->spec();
  }

  ModelChoice model;
  if (a.crt.y_model == "auto") {
    model = truth ? recommended_model(truth->name)
                  : ModelChoice{target_kind.is_categorical() ? ModelKind::Knn : ModelKind::LinearGaussian};
  } else {
    model.kind = parse_model_kind(a.crt.y_model);
  }
  model.knn_k = a.crt.knn_k;

  const auto bridge =
      connect_if_needed(a.crt, model.kind == ModelKind::External || sampler.kind == SamplerKind::External);
  model.bridge = bridge;
  sampler.bridge = bridge;

  TestOptions options;
  if (auto features = parse_features(a.feature, data.p()); !features.empty()) options.features = features;
  options.threads = a.crt.threads;
  const FeatureTestReport report = test_all_features(data, config, model, sampler, options);

  std::ostringstream body;
  if (a.format == "json") {
    json results = json::array();
    for (const auto& r : report.results) {
      json row = {{"j", r.feature_index},
                  {"t_obs", r.t_obs},
                  {"p_value", r.p_value},
                  {"reject_at_alpha", r.p_value <= config.alpha}};
      if (!a.emit_null.empty()) row["t_null"] = r.t_null;
      results.push_back(std::move(row));
    }
    json errors = json::array();
    for (const auto& e : report.errors) errors.push_back({{"j", e.feature_index}, {"message", e.message}});
    body << json{{"alpha", config.alpha}, {"B", config.num_null_draws}, {"results", results}, {"errors", errors}}.dump(2)
         << '\n';
  } else {
    body << "j,t_obs,p_value,reject_at_alpha\n";
    for (const auto& r : report.results) {
      body << r.feature_index << ',' << format_double(r.t_obs) << ',' << format_double(r.p_value) << ','
           << (r.p_value <= config.alpha ? 1 : 0) << '\n';
    }
  }
  if (a.out.empty()) {
    out << body.str();
  } else {
    write_text(a.out, body.str());
  }

  if (!a.emit_null.empty()) {
    std::ostringstream nulls;
    nulls << "j,draw,t_null\n";
    for (const auto& r : report.results) {
      for (std::size_t b = 0; b < r.t_null.size(); ++b) {
        nulls << r.feature_index << ',' << b << ',' << format_double(r.t_null[b]) << '\n';
      }
    }
    write_text(a.emit_null, nulls.str());
  }

  if (!report.errors.empty()) {
    for (const auto& e : report.errors) {
      err << "warning: feature " << e.feature_index << ": " << e.message << '\n';
    }
    return kWarnings;
  }
  return kSuccess;
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  if (a.suite == "table1") {
    config.datasets.assign(table1_dgps().begin(), table1_dgps().end());
  } else if (a.suite == "all") {
    config.datasets.assign(all_dgps().begin(), all_dgps().end());
  } else {
    throw UsageError("--suite must be 'table1' or 'all', got '" + a.suite + "'");
  }
  config.n = a.n;
  config.n_repeats = a.repeats;
  config.crt = crt_config(a.crt);
  config.threads = a.crt.threads;
  config.sampler = parse_sampler_kind(a.crt.sampler.empty() ? "oracle" : a.crt.sampler);
  if (a.crt.y_model != "auto") {
    config.model.automatic = false;
    config.model.choice.kind = parse_model_kind(a.crt.y_model);
    config.model.choice.knn_k = a.crt.knn_k;
  }
  config.bridge = connect_if_needed(
      a.crt, (!config.model.automatic && config.model.choice.kind == ModelKind::External) ||
                 config.sampler == SamplerKind::External);

  const ExperimentReport report = run_experiment(config);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  std::vector<std::string> outputs;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    outputs.push_back(name);
  };
  const auto relevant = p_values_of(report.relevant);
  const auto irrelevant = p_values_of(report.irrelevant);
  emit("table.csv", table_csv(report));
  emit("report.json", report_json(report).dump(2) + "\n");
  emit("ecdf_relevant.csv", curve_csv(relevant.empty() ? Curve{} : ecdf(relevant), "p_value", "ecdf"));
  emit("ecdf_irrelevant.csv", curve_csv(irrelevant.empty() ? Curve{} : ecdf(irrelevant), "p_value", "ecdf"));
  emit("qq_null.csv", curve_csv(irrelevant.empty() ? Curve{} : qq_uniform(irrelevant), "theoretical", "empirical"));

  json settings = crt_args_json(a.crt);
  settings["suite"] = a.suite;
  settings["n"] = a.n;
  settings["repeats"] = a.repeats;
  outputs.push_back("manifest.json");
  const json manifest = {{"tool", "crt"},
                         {"version", kVersion},
                         {"command", "bench"},
                         {"timestamp", timestamp()},
                         {"seed", a.crt.seed},
                         {"config", settings},
                         {"outputs", outputs}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  const auto rows = table_report(report);
  out << render_table(rows);
  if (report.has_failures()) {
    for (const auto& row : report.rows) {
      for (const auto& f : row.failures) err << "warning: " << dgp_id(row.name) << ": " << f << '\n';
    }
    return kWarnings;
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional randomization tests for feature relevance", "crt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  std::string config_path;

  GenerateArgs gen_args;
  auto* gen = app.add_subcommand("generate", "Draw a synthetic benchmark dataset");
  gen->add_option("--dgp", gen_args.dgp, "Generator name")->required();
  gen->add_option("--n", gen_args.n, "Rows")->capture_default_str();
  gen->add_option("--seed", gen_args.seed, "Seed")->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output CSV path")->required();
  gen->add_option("--truth-out", gen_args.truth_out, "Truth sidecar path (default: <out>.truth.json)");
  gen->add_option("--config", config_path, "JSON file with default flag values");

  TestArgs test_args;
  auto* test = app.add_subcommand("test", "Test features of one dataset");
  test->add_option("--data", test_args.data, "Dataset CSV")->required();
  test->add_option("--truth", test_args.truth, "Truth sidecar JSON");
  test->add_option("--feature", test_args.feature, "'all' or comma-separated 0-based indices")
      ->capture_default_str();
  test->add_option("--sampler", test_args.crt.sampler, "knn, oracle or external (default knn)");
  test->add_option("--format", test_args.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  test->add_option("--target-kind", test_args.target_kind, "auto, continuous or categorical:<levels>")
      ->capture_default_str();
  test->add_option("--emit-null", test_args.emit_null, "Write the null statistics to this CSV");
  test->add_option("--out", test_args.out, "Write results here instead of stdout");
  test->add_option("--config", config_path, "JSON file with default flag values");
  add_crt_options(test, test_args.crt);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Run the benchmark suite");
  bench->add_option("--suite", bench_args.suite, "table1 or all")->capture_default_str();
  bench->add_option("--n", bench_args.n, "Rows per dataset")->capture_default_str();
  bench->add_option("--repeats", bench_args.repeats, "Repetitions per dataset")->capture_default_str();
  bench->add_option("--sampler", bench_args.crt.sampler, "oracle, knn or external (default oracle)");
  bench->add_option("--out-dir", bench_args.out_dir, "Output directory")->required();
  bench->add_option("--config", config_path, "JSON file or manifest with default flag values");
  add_crt_options(bench, bench_args.crt);

  try {
    const auto merged = merge_config(args);
    std::vector<std::string> reversed(merged.rbegin(), merged.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_args, out);
    if (test->parsed()) return cmd_test(test_args, out, err);
    if (bench->parsed()) return cmd_bench(bench_args, out, err);
  } catch (const BridgeError& e) {
    err << "error: " << e.what() << '\n';
    return kBridgeFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace crt::cli
