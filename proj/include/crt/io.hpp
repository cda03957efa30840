#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crt/core.hpp"
#include "crt/dgp.hpp"

namespace crt {

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Dataset CSV: header x1..xp,y, one row per observation, categorical
/// values written as integers.
std::string dataset_csv(const Dataset& data);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Builds a Dataset from a parsed table; the last column is the target.
Dataset dataset_from_table(const CsvTable& table, std::vector<FeatureKind> kinds,
                           FeatureKind target_kind);

struct TruthFile {
  DgpName name;
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::size_t> relevant_set;
  std::uint64_t seed = 0;
  std::vector<FeatureKind> kinds;
  FeatureKind target_kind;

  DgpSpec spec() const;
};

TruthFile make_truth(const DgpInstance& instance, std::uint64_t seed);
nlohmann::json truth_json(const TruthFile& truth);
TruthFile parse_truth(const nlohmann::json& json);
TruthFile read_truth(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace crt
