#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crt/core.hpp"
#include "crt/models.hpp"

namespace crt {

// Client side of the external-model worker protocol.
//
// The worker is a child process speaking newline-delimited JSON on its
// standard input and output. Requests are {"id", "op", "payload"}; every
// request gets exactly one response {"id", "ok": true, "payload"} or
// {"id", "ok": false, "error": {"code", "message"}}. Ids start at 1 and
// strictly increase. Feature kinds travel as "continuous" or
// "categorical:<levels>".

enum class BridgeErrorKind {
  Launch,      // the worker command could not be started
  Crash,       // the worker exited or closed its output
  Timeout,     // no response within the per-call deadline
  Malformed,   // response is not valid protocol JSON
  Protocol,    // response id mismatch or unexpected shape
  Version,     // handshake version mismatch
  Remote,      // worker answered with an error object
  Validation,  // response failed a numeric contract check
};

std::string_view to_string(BridgeErrorKind kind);

class BridgeError : public Error {
 public:
  BridgeError(BridgeErrorKind kind, std::string code, const std::string& message);

  BridgeErrorKind kind() const { return kind_; }
  // Remote error code (e.g. "BADSHAPE"); empty for client-side failures.
  const std::string& code() const { return code_; }

 private:
  BridgeErrorKind kind_;
  std::string code_;
};

struct BridgeOptions {
  std::string command;
  std::chrono::milliseconds timeout{std::chrono::seconds(300)};
};

class BridgeClient {
 public:
  static constexpr int kProtocolVersion = 1;

  // Launches the worker and completes the handshake.
  explicit BridgeClient(BridgeOptions options);
  ~BridgeClient();

  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  const std::vector<std::string>& capabilities() const { return capabilities_; }
  int worker_version() const { return worker_version_; }

  // Sends one request and returns the response payload. Serialised across
  // threads; a transport failure leaves the client unusable.
  nlohmann::json call(const std::string& op, nlohmann::json payload);

 private:
  void launch();
  void handshake();
  void write_line(const std::string& line);
  std::string read_line();
  [[noreturn]] void worker_gone(std::string detail);
  void shutdown() noexcept;

  BridgeOptions options_;
  std::mutex mutex_;
  int fd_ = -1;
  int pid_ = -1;
  bool broken_ = false;
  std::int64_t next_id_ = 1;
  std::string buffer_;
  std::vector<std::string> capabilities_;
  int worker_version_ = 0;
};

/// Y|X model hosted by the worker.
class ExternalPredictiveModel final : public PredictiveModel {
 public:
  ExternalPredictiveModel(std::shared_ptr<BridgeClient> client, const Matrix& x, const Vector& y,
                          const FeatureKind& target_kind, std::uint64_t seed);

  double log_density(std::span<const double> x, double y) const override;
  std::vector<double> log_densities(const Matrix& x, const Vector& y) const override;

 private:
  std::shared_ptr<BridgeClient> client_;
  nlohmann::json model_id_;
  FeatureKind kind_;
};

/// X_j | X_{-j} sampler hosted by the worker: quantile grids for continuous
/// columns, class probabilities for categorical ones.
class ExternalConditionalSampler final : public ConditionalSampler {
 public:
  ExternalConditionalSampler(std::shared_ptr<BridgeClient> client, const Matrix& x_minus_j,
                             const Vector& x_j, const FeatureKind& kind, std::size_t grid_size,
                             std::uint64_t seed);

  const FeatureKind& kind() const override { return kind_; }
  std::unique_ptr<ConditionedColumn> condition(const Matrix& x_minus_j) const override;

 private:
  std::shared_ptr<BridgeClient> client_;
  nlohmann::json model_id_;
  FeatureKind kind_;
  std::vector<double> levels_;
};

// Response checks applied to worker output before use.
void validate_quantile_rows(const Matrix& values, std::size_t rows, std::size_t levels);
void validate_probability_rows(const Matrix& probs, std::size_t rows, std::size_t levels);

nlohmann::json matrix_to_json(const Matrix& m);
nlohmann::json vector_to_json(const Vector& v);

}  // namespace crt
