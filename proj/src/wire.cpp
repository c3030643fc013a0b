#include "blockbench/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

namespace blockbench {

namespace {

using nlohmann::json;

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

const json& field(const json& j, const char* key) {
  if (!j.contains(key)) throw WireError("bad_request", std::string("missing field '") + key + "'");
  return j.at(key);
}

std::map<std::string, Values> assignments_from(const json& j) {
  if (!j.is_object()) throw WireError("bad_request", "assignments must be an object");
  std::map<std::string, Values> a;
  for (const auto& [k, v] : j.items()) a[k] = v.is_array() ? v.get<Values>() : Values{v.get<double>()};
  return a;
}

json parse_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw WireError("parse", e.what());
  }
  if (!j.is_object()) throw WireError("bad_request", "message must be a JSON object");
  return j;
}

template <class F>
auto translate(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const WireError&) {
    throw;
  } catch (const json::exception& e) {
    throw WireError("bad_request", e.what());
  } catch (const Error& e) {
    throw WireError("bad_request", e.what());
  }
}

ErrorResponse error_of(const std::exception& e) {
  if (auto* w = dynamic_cast<const WireError*>(&e)) return {w->code, w->what()};
  if (dynamic_cast<const LifecycleError*>(&e)) return {"lifecycle", e.what()};
  if (dynamic_cast<const ActionError*>(&e)) return {"action", e.what()};
  if (dynamic_cast<const ConfigError*>(&e)) return {"config", e.what()};
  if (dynamic_cast<const CatalogError*>(&e)) return {"catalog", e.what()};
  if (dynamic_cast<const TaskError*>(&e)) return {"task", e.what()};
  if (dynamic_cast<const SimulationDiverged*>(&e)) return {"diverged", e.what()};
  return {"internal", e.what()};
}

json info_of(const StepInfo& i) {
  return {{"fractional_success", i.fractional_success},
          {"interventions_applied", i.interventions_applied},
          {"suppressed", i.suppressed},
          {"time_left_seconds", i.time_left_seconds}};
}

}  // namespace

bool ResetRequest::operator==(const ResetRequest& o) const {
  return family == o.family && params == o.params && config_overrides == o.config_overrides && seed == o.seed &&
         options.action_mode == o.options.action_mode && options.reward == o.options.reward;
}

std::string serialize(const WireRequest& r) {
  json j;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ResetRequest>) {
          j = {{"type", "reset"},
               {"task", {{"family", to_string(m.family)}, {"params", m.params}}},
               {"config_overrides", m.config_overrides},
               {"seed", m.seed},
               {"action_mode", to_string(m.options.action_mode)}};
          if (m.options.reward) j["reward"] = to_string(*m.options.reward);
        } else if constexpr (std::is_same_v<T, StepRequest>) {
          j = {{"type", "step"}, {"action", m.action}, {"mode", to_string(m.mode)}};
        } else if constexpr (std::is_same_v<T, InterveneRequest>) {
          j = {{"type", "intervene"}, {"assignments", m.assignments}};
        } else if constexpr (std::is_same_v<T, SpecQuery>) {
          j = {{"type", "spec_query"}};
        } else {
          j = {{"type", "close"}};
        }
      },
      r);
  return dump(j);
}

WireRequest parse_request(std::string_view line) {
  const json j = parse_object(line);
  return translate([&]() -> WireRequest {
    const std::string type = field(j, "type").get<std::string>();
    if (type == "reset") {
      ResetRequest m;
      const json& task = field(j, "task");
      if (task.is_string()) {
        m.family = family_from_string(task.get<std::string>());
      } else {
        m.family = family_from_string(field(task, "family").get<std::string>());
        if (task.contains("params")) m.params = assignments_from(task.at("params"));
      }
      if (j.contains("config_overrides")) m.config_overrides = assignments_from(j.at("config_overrides"));
      if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("action_mode")) {
        m.options.action_mode = control_mode_from_string(j.at("action_mode").get<std::string>());
      }
      if (j.contains("reward")) m.options.reward = reward_type_from_string(j.at("reward").get<std::string>());
      return m;
    }
    if (type == "step") {
      StepRequest m;
      m.action = field(j, "action").get<std::vector<double>>();
      if (j.contains("mode")) m.mode = control_mode_from_string(j.at("mode").get<std::string>());
      return m;
    }
    if (type == "intervene") return InterveneRequest{assignments_from(field(j, "assignments"))};
    if (type == "spec_query") return SpecQuery{};
    if (type == "close") return CloseRequest{};
    throw WireError("bad_request", "unknown request type '" + type + "'");
  });
}

std::string serialize(const WireResponse& r) {
  json j;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ObservationResponse>) {
          j = {{"type", "observation"},
               {"observation", m.observation},
               {"reward", m.reward},
               {"done", m.done},
               {"info", m.info}};
        } else if constexpr (std::is_same_v<T, SpecResponse>) {
          j = {{"type", "spec"}, {"document", m.document}};
        } else if constexpr (std::is_same_v<T, ErrorResponse>) {
          j = {{"type", "error"}, {"code", m.code}, {"detail", m.detail}};
        } else {
          j = {{"type", "closed"}};
        }
      },
      r);
  return dump(j);
}

WireResponse parse_response(std::string_view line) {
  const json j = parse_object(line);
  return translate([&]() -> WireResponse {
    const std::string type = field(j, "type").get<std::string>();
    if (type == "observation") {
      ObservationResponse m;
      m.observation = field(j, "observation").get<Observation>();
      m.reward = field(j, "reward").get<double>();
      m.done = field(j, "done").get<bool>();
      m.info = j.value("info", json::object());
      return m;
    }
    if (type == "spec") return SpecResponse{field(j, "document")};
    if (type == "error") return ErrorResponse{field(j, "code").get<std::string>(), j.value("detail", "")};
    if (type == "closed") return ClosedResponse{};
    throw WireError("bad_request", "unknown response type '" + type + "'");
  });
}

nlohmann::json spec_document(const VariableCatalog& catalog) {
  json families = json::array();
  for (Family f : all_families()) {
    families.push_back({{"name", to_string(f)},
                        {"free_block_count", has_free_block_count(f)},
                        {"dense_reward", has_dense_reward(f)},
                        {"obstacles", f == Family::pick_and_place ? 1 : 0}});
  }
  json modes = json::array();
  for (ControlMode m : {ControlMode::joint_position, ControlMode::joint_torque, ControlMode::ee_position,
                        ControlMode::delta_joint_position, ControlMode::delta_joint_torque,
                        ControlMode::delta_ee_position}) {
    modes.push_back(to_string(m));
  }
  return {{"protocol_version", kWireProtocolVersion},
          {"families", families},
          {"catalog", catalog.to_json()},
          {"observation",
           {{"length", "28 + 17 * blocks + 10 * (goal_parts + obstacles)"},
            {"layout_one_block", observation_layout(1, 1, 0)}}},
          {"action_modes", modes},
          {"action_length", 9},
          {"reward_types", {"dense", "sparse", "fractional"}}};
}

Session::Session(const PhysicsConstants& physics, const VariableCatalog& catalog)
    : physics_(physics), catalog_(catalog) {}

WireResponse Session::handle(const WireRequest& r) {
  if (closed_) return ErrorResponse{"lifecycle", "session closed"};
  try {
    if (auto* m = std::get_if<ResetRequest>(&r)) {
      TaskInstance task = build_task(m->family, m->params, m->seed, catalog_, physics_);
      if (!m->config_overrides.empty()) {
        Intervention iv;
        iv.assignments = m->config_overrides;
        auto next = intervene(task, iv, {}, catalog_, physics_);
        if (auto* rej = std::get_if<Rejection>(&next)) {
          return ErrorResponse{"config", "config override rejected (" + to_string(rej->code) + "): " + rej->detail};
        }
        task = std::get<TaskInstance>(std::move(next));
      }
      auto env = std::make_unique<Environment>(m->options, catalog_, physics_);
      ObservationResponse out;
      out.observation = env->reset(task, m->seed);
      env_ = std::move(env);
      out.info = {{"fractional_success", env_->fractional_success()},
                  {"episode_limit_steps", task.episode_limit_steps},
                  {"layout", observation_layout(task.num_blocks(), static_cast<int>(task.goal.parts.size()),
                                                static_cast<int>(task.obstacles.size()))}};
      return out;
    }
    if (auto* m = std::get_if<StepRequest>(&r)) {
      if (!env_) throw LifecycleError("step before reset");
      StepResult s = env_->step(RobotCommand{m->mode, m->action});
      return ObservationResponse{std::move(s.observation), s.reward, s.done, info_of(s.info)};
    }
    if (auto* m = std::get_if<InterveneRequest>(&r)) {
      if (!env_) throw LifecycleError("intervention before reset");
      Intervention iv;
      iv.assignments = m->assignments;
      InterventionOutcome o = env_->do_intervention(iv);
      ObservationResponse out;
      out.observation = std::move(o.observation);
      out.done = env_->done();
      out.info = {{"applied", o.applied}};
      if (o.rejection) {
        out.info["rejection"] = {{"code", to_string(o.rejection->code)}, {"detail", o.rejection->detail}};
      }
      return out;
    }
    if (std::holds_alternative<SpecQuery>(r)) {
      json doc = spec_document(catalog_);
      if (env_) {
        const TaskInstance t = env_->task();
        doc["current_layout"] = observation_layout(t.num_blocks(), static_cast<int>(t.goal.parts.size()),
                                                   static_cast<int>(t.obstacles.size()));
      }
      return SpecResponse{std::move(doc)};
    }
    closed_ = true;
    env_.reset();
    return ClosedResponse{};
  } catch (const std::exception& e) {
    return error_of(e);
  }
}

std::string Session::handle_line(std::string_view line) {
  WireRequest r;
  try {
    r = parse_request(line);
  } catch (const std::exception& e) {
    return serialize(WireResponse{error_of(e)});
  }
  return serialize(handle(r));
}

void serve_stream(std::istream& in, std::ostream& out, const PhysicsConstants& physics) {
  Session s(physics);
  std::string line;
  while (!s.closed() && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << s.handle_line(line) << '\n' << std::flush;
  }
}

// ---- TCP ------------------------------------------------------------------

namespace {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Next newline-terminated line from fd, buffering the rest.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    const auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

sockaddr_in address(const std::string& host, int port) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) throw ConfigError("bad IPv4 address '" + host + "'");
  return a;
}

}  // namespace

TcpServer::TcpServer(int port, const std::string& host, const PhysicsConstants& physics) : physics_(physics) {
  if (port < 0 || port > 65535) throw ConfigError("port out of range");
  const sockaddr_in a = address(host, port);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ConfigError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port) + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpServer::~TcpServer() {
  stop();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::run() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    std::lock_guard lock(mutex_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    connections_.push_back(fd);
    threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  std::lock_guard lock(mutex_);
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
}

void TcpServer::serve_connection(int fd) {
  Session s(physics_);
  std::string buffer, line;
  while (!s.closed() && read_line(fd, buffer, line)) {
    if (line.empty()) continue;
    if (!send_all(fd, s.handle_line(line) + "\n")) break;
  }
  std::lock_guard lock(mutex_);
  std::erase(connections_, fd);
  ::close(fd);
}

TcpClient::TcpClient(const std::string& host, int port) {
  const sockaddr_in a = address(host, port);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0 || ::connect(fd_, reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
    const std::string why = std::strerror(errno);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw ConfigError("cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
}

TcpClient::~TcpClient() {
  if (fd_ >= 0) ::close(fd_);
}

std::string TcpClient::request(std::string_view line) {
  std::string msg(line);
  msg += '\n';
  if (!send_all(fd_, msg)) throw ConfigError("connection lost while sending");
  std::string reply;
  if (!read_line(fd_, buffer_, reply)) throw ConfigError("connection closed before a reply");
  return reply;
}

}  // namespace blockbench
