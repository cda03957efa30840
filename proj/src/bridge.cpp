#include "crt/bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

namespace crt {

using nlohmann::json;

namespace {

constexpr double kProbabilityTolerance = 1e-6;

json kind_to_json(const FeatureKind& kind) { return kind.to_string(); }

Matrix json_to_matrix(const json& value, const char* field) {
  if (!value.is_array()) {
    throw BridgeError(BridgeErrorKind::Malformed, "", std::string(field) + " is not an array");
  }
  const auto rows = static_cast<Eigen::Index>(value.size());
  Eigen::Index cols = rows > 0 && value[0].is_array() ? static_cast<Eigen::Index>(value[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = value[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw BridgeError(BridgeErrorKind::Malformed, "",
                        std::string(field) + " rows have inconsistent lengths");
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      const json& cell = row[static_cast<std::size_t>(j)];
      if (!cell.is_number()) {
        throw BridgeError(BridgeErrorKind::Malformed, "", std::string(field) + " holds a non-number");
      }
      m(i, j) = cell.get<double>();
    }
  }
  return m;
}

std::vector<double> json_to_numbers(const json& value, const char* field) {
  if (!value.is_array()) {
    throw BridgeError(BridgeErrorKind::Malformed, "", std::string(field) + " is not an array");
  }
  std::vector<double> out;
  out.reserve(value.size());
  for (const json& cell : value) {
    if (!cell.is_number()) {
      throw BridgeError(BridgeErrorKind::Malformed, "", std::string(field) + " holds a non-number");
    }
    out.push_back(cell.get<double>());
  }
  return out;
}

const json& require_field(const json& payload, const char* field) {
  if (!payload.is_object() || !payload.contains(field)) {
    throw BridgeError(BridgeErrorKind::Protocol, "",
                      std::string("response payload lacks '") + field + "'");
  }
  return payload.at(field);
}

class TableColumn final : public ConditionedColumn {
 public:
  TableColumn(Matrix table, bool categorical)
      : table_(std::move(table)), categorical_(categorical) {}
  std::size_t rows() const override { return static_cast<std::size_t>(table_.rows()); }
  double draw(std::size_t row, std::uint64_t seed) const override {
    Rng rng(seed);
    const auto r = static_cast<Eigen::Index>(row);
    if (!categorical_) {
      return table_(r, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(table_.cols()))));
    }
    std::vector<double> probs(static_cast<std::size_t>(table_.cols()));
    for (Eigen::Index l = 0; l < table_.cols(); ++l) probs[static_cast<std::size_t>(l)] = table_(r, l);
    return draw_level(probs, rng.uniform());
  }

 private:
  Matrix table_;
  bool categorical_;
};

}  // namespace

std::string_view to_string(BridgeErrorKind kind) {
  switch (kind) {
    case BridgeErrorKind::Launch: return "launch";
    case BridgeErrorKind::Crash: return "crash";
    case BridgeErrorKind::Timeout: return "timeout";
    case BridgeErrorKind::Malformed: return "malformed";
    case BridgeErrorKind::Protocol: return "protocol";
    case BridgeErrorKind::Version: return "version";
    case BridgeErrorKind::Remote: return "remote";
    case BridgeErrorKind::Validation: return "validation";
  }
  return "unknown";
}

BridgeError::BridgeError(BridgeErrorKind kind, std::string code, const std::string& message)
    : Error("bridge " + std::string(to_string(kind)) + " error" +
            (code.empty() ? "" : " [" + code + "]") + ": " + message),
      kind_(kind),
      code_(std::move(code)) {}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// ---------------------------------------------------------------------------
// Process and transport
// ---------------------------------------------------------------------------

BridgeClient::BridgeClient(BridgeOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) {
    throw BridgeError(BridgeErrorKind::Launch, "", "empty worker command");
  }
  launch();
  try {
    handshake();
  } catch (...) {
    shutdown();
    throw;
  }
}

BridgeClient::~BridgeClient() { shutdown(); }

void BridgeClient::launch() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw BridgeError(BridgeErrorKind::Launch, "", std::string("socketpair: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw BridgeError(BridgeErrorKind::Launch, "", std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", options_.command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  fd_ = fds[0];
  pid_ = pid;
}

void BridgeClient::shutdown() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    for (int attempt = 0; attempt < 200; ++attempt) {
      if (::waitpid(pid_, &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void BridgeClient::write_line(const std::string& line) {
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t w = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      worker_gone(std::string("write to worker failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(w);
  }
}

std::string BridgeClient::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  for (;;) {
    const auto newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0) {
      broken_ = true;
      if (pid_ > 0) ::kill(pid_, SIGKILL);
      throw BridgeError(BridgeErrorKind::Timeout, "",
                        "no response within " + std::to_string(options_.timeout.count()) + " ms");
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw BridgeError(BridgeErrorKind::Crash, "", std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[65536];
    const ssize_t r = ::recv(fd_, chunk, sizeof chunk, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      worker_gone(std::string("read: ") + std::strerror(errno));
    }
    if (r == 0) worker_gone("worker closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(r));
  }
}

void BridgeClient::worker_gone(std::string detail) {
  broken_ = true;
  int status = 0;
  if (pid_ > 0 && ::waitpid(pid_, &status, 0) == pid_) {
    pid_ = -1;
    if (WIFEXITED(status)) {
      const int code = WEXITSTATUS(status);
      if (code == 127 || code == 126) {
        throw BridgeError(BridgeErrorKind::Launch, "", "worker command '" + options_.command + "' could not be run");
      }
      detail = "worker exited with status " + std::to_string(code);
    } else if (WIFSIGNALED(status)) {
      detail = "worker killed by signal " + std::to_string(WTERMSIG(status));
    }
  }
  throw BridgeError(BridgeErrorKind::Crash, "", detail);
}

json BridgeClient::call(const std::string& op, json payload) {
  std::lock_guard lock(mutex_);
  if (broken_) throw BridgeError(BridgeErrorKind::Crash, "", "worker connection is no longer usable");

  const std::int64_t id = next_id_++;
  const json request = {{"id", id}, {"op", op}, {"payload", std::move(payload)}};
  write_line(request.dump() + "\n");

  const std::string line = read_line();
  json response;
  try {
    response = json::parse(line);
  } catch (const json::parse_error& e) {
    broken_ = true;
    throw BridgeError(BridgeErrorKind::Malformed, "", std::string("unparseable response: ") + e.what());
  }
  if (!response.is_object() || !response.contains("id") || !response.contains("ok") ||
      !response["ok"].is_boolean()) {
    broken_ = true;
    throw BridgeError(BridgeErrorKind::Malformed, "", "response lacks 'id' or 'ok'");
  }
  if (!response["id"].is_number_integer() || response["id"].get<std::int64_t>() != id) {
    broken_ = true;
    throw BridgeError(BridgeErrorKind::Protocol, "",
                      "response id " + response["id"].dump() + " does not match request " +
                          std::to_string(id));
  }
  if (!response["ok"].get<bool>()) {
    std::string code = "UNKNOWN";
    std::string message;
    if (response.contains("error") && response["error"].is_object()) {
      const json& err = response["error"];
      if (err.contains("code") && err["code"].is_string()) code = err["code"].get<std::string>();
      if (err.contains("message") && err["message"].is_string()) {
        message = err["message"].get<std::string>();
      }
    }
    const auto kind = code == "VERSION" ? BridgeErrorKind::Version : BridgeErrorKind::Remote;
    throw BridgeError(kind, code, op + ": " + message);
  }
  return response.contains("payload") ? response["payload"] : json::object();
}

void BridgeClient::handshake() {
  const json payload = call("handshake", {{"version", kProtocolVersion}});
  if (!payload.contains("version") || !payload["version"].is_number_integer()) {
    throw BridgeError(BridgeErrorKind::Protocol, "", "handshake response lacks a version");
  }
  worker_version_ = payload["version"].get<int>();
  if (worker_version_ != kProtocolVersion) {
    throw BridgeError(BridgeErrorKind::Version, "VERSION",
                      "worker speaks protocol " + std::to_string(worker_version_) +
                          ", client speaks " + std::to_string(kProtocolVersion));
  }
  if (payload.contains("capabilities") && payload["capabilities"].is_array()) {
    for (const json& c : payload["capabilities"]) {
      if (c.is_string()) capabilities_.push_back(c.get<std::string>());
    }
  }
}

// ---------------------------------------------------------------------------
// Response validation
// ---------------------------------------------------------------------------

void validate_quantile_rows(const Matrix& values, std::size_t rows, std::size_t levels) {
  if (static_cast<std::size_t>(values.rows()) != rows ||
      static_cast<std::size_t>(values.cols()) != levels) {
    throw BridgeError(BridgeErrorKind::Validation, "",
                      "quantile response is " + std::to_string(values.rows()) + "x" +
                          std::to_string(values.cols()) + ", expected " + std::to_string(rows) +
                          "x" + std::to_string(levels));
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) {
      if (!std::isfinite(values(i, k))) {
        throw BridgeError(BridgeErrorKind::Validation, "", "non-finite quantile");
      }
      if (k > 0 && values(i, k) < values(i, k - 1)) {
        throw BridgeError(BridgeErrorKind::Validation, "",
                          "quantiles decrease in row " + std::to_string(i) + " at level " +
                              std::to_string(k));
      }
    }
  }
}

void validate_probability_rows(const Matrix& probs, std::size_t rows, std::size_t levels) {
  if (static_cast<std::size_t>(probs.rows()) != rows ||
      static_cast<std::size_t>(probs.cols()) != levels) {
    throw BridgeError(BridgeErrorKind::Validation, "",
                      "class-probability response is " + std::to_string(probs.rows()) + "x" +
                          std::to_string(probs.cols()) + ", expected " + std::to_string(rows) +
                          "x" + std::to_string(levels));
  }
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double total = 0.0;
    for (Eigen::Index l = 0; l < probs.cols(); ++l) {
      const double v = probs(i, l);
      if (!std::isfinite(v) || v < 0.0) {
        throw BridgeError(BridgeErrorKind::Validation, "", "invalid class probability");
      }
      total += v;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw BridgeError(BridgeErrorKind::Validation, "",
                        "class probabilities in row " + std::to_string(i) + " sum to " +
                            std::to_string(total) + ", not 1");
    }
  }
}

// ---------------------------------------------------------------------------
// Adapters
// ---------------------------------------------------------------------------

ExternalPredictiveModel::ExternalPredictiveModel(std::shared_ptr<BridgeClient> client,
                                                 const Matrix& x, const Vector& y,
                                                 const FeatureKind& target_kind,
                                                 std::uint64_t seed)
    : client_(std::move(client)), kind_(target_kind) {
  const json payload = client_->call("fit_y", {{"X", matrix_to_json(x)},
                                               {"y", vector_to_json(y)},
                                               {"y_kind", kind_to_json(target_kind)},
                                               {"seed", seed}});
  model_id_ = require_field(payload, "model_id");
}

std::vector<double> ExternalPredictiveModel::log_densities(const Matrix& x, const Vector& y) const {
  if (x.rows() != y.size()) throw InvalidArgument("log_densities: row count mismatch");
  const json payload = client_->call(
      "log_density", {{"model_id", model_id_}, {"X_eval", matrix_to_json(x)}, {"y_eval", vector_to_json(y)}});
  auto values = json_to_numbers(require_field(payload, "log_density"), "log_density");
  if (static_cast<Eigen::Index>(values.size()) != x.rows()) {
    throw BridgeError(BridgeErrorKind::Validation, "",
                      "log_density returned " + std::to_string(values.size()) + " values for " +
                          std::to_string(x.rows()) + " rows");
  }
  for (const double v : values) {
    if (!std::isfinite(v)) throw BridgeError(BridgeErrorKind::Validation, "", "non-finite log density");
  }
  return values;
}

double ExternalPredictiveModel::log_density(std::span<const double> x, double y) const {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  Vector target(1);
  target(0) = y;
  return log_densities(row, target).front();
}

ExternalConditionalSampler::ExternalConditionalSampler(std::shared_ptr<BridgeClient> client,
                                                       const Matrix& x_minus_j, const Vector& x_j,
                                                       const FeatureKind& kind,
                                                       std::size_t grid_size, std::uint64_t seed)
    : client_(std::move(client)), kind_(kind) {
  if (kind_.is_continuous()) levels_ = QuantileGrid::midpoint_levels(grid_size);
  const json payload = client_->call("fit_conditional", {{"X_minus_j", matrix_to_json(x_minus_j)},
                                                         {"x_j", vector_to_json(x_j)},
                                                         {"kind", kind_to_json(kind)},
                                                         {"seed", seed}});
  model_id_ = require_field(payload, "model_id");
}

std::unique_ptr<ConditionedColumn> ExternalConditionalSampler::condition(
    const Matrix& x_minus_j) const {
  const auto rows = static_cast<std::size_t>(x_minus_j.rows());
  if (kind_.is_continuous()) {
    const json payload = client_->call("quantiles", {{"model_id", model_id_},
                                                     {"X_minus_j_eval", matrix_to_json(x_minus_j)},
                                                     {"levels", levels_}});
    Matrix values = json_to_matrix(require_field(payload, "values"), "values");
    if (rows == 0) values.resize(0, static_cast<Eigen::Index>(levels_.size()));
    validate_quantile_rows(values, rows, levels_.size());
    return std::make_unique<TableColumn>(std::move(values), false);
  }
  const json payload = client_->call(
      "class_probs", {{"model_id", model_id_}, {"X_minus_j_eval", matrix_to_json(x_minus_j)}});
  Matrix probs = json_to_matrix(require_field(payload, "probs"), "probs");
  if (rows == 0) probs.resize(0, kind_.levels());
  validate_probability_rows(probs, rows, static_cast<std::size_t>(kind_.levels()));
  return std::make_unique<TableColumn>(std::move(probs), true);
}

}  // namespace crt
