#include "crt/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace crt {

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, result.ptr);
}

std::string dataset_csv(const Dataset& data) {
  std::string out;
  for (std::size_t j = 0; j < data.p(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "y\n";
  const Matrix& x = data.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out += format_double(x(i, j));
      out += ',';
    }
    out += format_double(data.target()(i));
    out += '\n';
  }
  return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  write_text(path, dataset_csv(data));
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  fields.push_back(current);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable table;
  if (!std::getline(in, line)) throw InvalidArgument("CSV is empty");
  table.header = split_fields(line);
  const std::size_t cols = table.header.size();

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != cols) {
      throw InvalidArgument("CSV line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(cols));
    }
    for (const auto& f : fields) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        throw InvalidArgument("CSV line " + std::to_string(line_no) + ": '" + f +
                              "' is not a number");
      }
      values.push_back(v);
    }
    ++rows;
  }
  table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * cols + j];
    }
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

Dataset dataset_from_table(const CsvTable& table, std::vector<FeatureKind> kinds,
                           FeatureKind target_kind) {
  const Eigen::Index cols = table.values.cols();
  if (cols < 2) throw InvalidArgument("dataset CSV needs at least one feature and a target");
  if (kinds.empty()) kinds.assign(static_cast<std::size_t>(cols - 1), FeatureKind::continuous());
  return Dataset(table.values.leftCols(cols - 1), std::move(kinds), table.values.col(cols - 1),
                 target_kind);
}

DgpSpec TruthFile::spec() const {
  DgpSpec s = dgp_spec(name, n);
  if (s.p != p || s.relevant_set != relevant_set) {
    throw InvalidArgument("truth file does not match the '" + std::string(dgp_id(name)) +
                          "' generator");
  }
  return s;
}

TruthFile make_truth(const DgpInstance& instance, std::uint64_t seed) {
  return TruthFile{instance.spec.name,         instance.spec.n,          instance.spec.p,
                   instance.spec.relevant_set, seed,                     instance.data.kinds(),
                   instance.data.target_kind()};
}

nlohmann::json truth_json(const TruthFile& truth) {
  std::vector<std::string> kinds;
  for (const auto& k : truth.kinds) kinds.push_back(k.to_string());
  return {{"name", dgp_id(truth.name)},
          {"n", truth.n},
          {"p", truth.p},
          {"relevant_set", truth.relevant_set},
          {"seed", truth.seed},
          {"feature_kinds", kinds},
          {"target_kind", truth.target_kind.to_string()}};
}

TruthFile parse_truth(const nlohmann::json& json) {
  try {
    TruthFile truth{parse_dgp(json.at("name").get<std::string>()),
                    json.at("n").get<std::size_t>(),
                    json.at("p").get<std::size_t>(),
                    json.at("relevant_set").get<std::vector<std::size_t>>(),
                    json.at("seed").get<std::uint64_t>(),
                    {},
                    FeatureKind::continuous()};
    if (json.contains("feature_kinds")) {
      for (const auto& k : json["feature_kinds"]) truth.kinds.push_back(FeatureKind::parse(k.get<std::string>()));
    } else {
      truth.kinds.assign(truth.p, FeatureKind::continuous());
    }
    if (json.contains("target_kind")) {
      truth.target_kind = FeatureKind::parse(json["target_kind"].get<std::string>());
    } else if (truth.name == DgpName::Xor) {
      truth.target_kind = FeatureKind::categorical(2);
    }
    return truth;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed truth file: ") + e.what());
  }
}

TruthFile read_truth(const std::filesystem::path& path) {
  try {
    return parse_truth(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("truth file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace crt
