#pragma once

// Newline-delimited JSON protocol spoken by external agents, one environment
// per connection, served over stdio or TCP.

#include "blockbench/env.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

namespace blockbench {

inline constexpr const char* kWireProtocolVersion = "1";

struct ResetRequest {
  Family family = Family::pushing;
  TaskParams params;
  std::map<std::string, Values> config_overrides;
  std::uint64_t seed = 0;
  EnvOptions options;

  bool operator==(const ResetRequest& o) const;
};

struct StepRequest {
  std::vector<double> action;
  ControlMode mode = ControlMode::joint_position;
  bool operator==(const StepRequest&) const = default;
};

struct InterveneRequest {
  std::map<std::string, Values> assignments;
  bool operator==(const InterveneRequest&) const = default;
};

struct SpecQuery {
  bool operator==(const SpecQuery&) const = default;
};

struct CloseRequest {
  bool operator==(const CloseRequest&) const = default;
};

using WireRequest = std::variant<ResetRequest, StepRequest, InterveneRequest, SpecQuery, CloseRequest>;

/// Reply to reset, step and intervene. Intervene replies carry `applied` in info.
struct ObservationResponse {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  nlohmann::json info = nlohmann::json::object();
  bool operator==(const ObservationResponse&) const = default;
};

struct SpecResponse {
  nlohmann::json document;
  bool operator==(const SpecResponse&) const = default;
};

/// Codes: parse, bad_request, lifecycle, action, config, catalog, task,
/// diverged, internal.
struct ErrorResponse {
  std::string code;
  std::string detail;
  bool operator==(const ErrorResponse&) const = default;
};

struct ClosedResponse {
  bool operator==(const ClosedResponse&) const = default;
};

using WireResponse = std::variant<ObservationResponse, SpecResponse, ErrorResponse, ClosedResponse>;

/// Thrown by the parsers; carries the error code the server replies with.
struct WireError : Error {
  WireError(std::string c, const std::string& what) : Error(what), code(std::move(c)) {}
  std::string code;
};

/// Single-line JSON, no trailing newline.
std::string serialize(const WireRequest& r);
std::string serialize(const WireResponse& r);
WireRequest parse_request(std::string_view line);
WireResponse parse_response(std::string_view line);

/// Families, variable catalog, observation layouts and action modes.
nlohmann::json spec_document(const VariableCatalog& catalog = VariableCatalog::builtin());

/// One connection's environment. Requests are handled strictly in order.
class Session {
 public:
  explicit Session(const PhysicsConstants& physics = PhysicsConstants::builtin(),
                   const VariableCatalog& catalog = VariableCatalog::builtin());

  WireResponse handle(const WireRequest& r);
  /// Malformed lines produce an error response; the session survives.
  std::string handle_line(std::string_view line);
  bool closed() const { return closed_; }

 private:
  PhysicsConstants physics_;
  const VariableCatalog& catalog_;
  std::unique_ptr<Environment> env_;
  bool closed_ = false;
};

/// Serves one session until close or end of input.
void serve_stream(std::istream& in, std::ostream& out,
                  const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Listens on `port` (0 picks a free one); a thread per connection.
class TcpServer {
 public:
  /// Throws ConfigError when the address cannot be bound.
  explicit TcpServer(int port, const std::string& host = "127.0.0.1",
                     const PhysicsConstants& physics = PhysicsConstants::builtin());
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  int port() const { return port_; }
  /// Accepts until stop().
  void run();
  void stop();

 private:
  void serve_connection(int fd);

  PhysicsConstants physics_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::vector<int> connections_;
  std::vector<std::thread> threads_;
};

/// Blocking line client over TCP, for tools and tests.
class TcpClient {
 public:
  /// Throws ConfigError when the connection fails.
  TcpClient(const std::string& host, int port);
  ~TcpClient();
  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;

  /// Sends one line and waits for one reply line.
  std::string request(std::string_view line);
  WireResponse request(const WireRequest& r) { return parse_response(request(serialize(r))); }

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace blockbench
