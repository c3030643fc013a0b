#include "blockbench/rng.hpp"
#include "blockbench/wire.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <sstream>
#include <thread>

using namespace blockbench;

namespace {

long pick(Rng& rng, long lo, long hi) { return lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

// Doubles spanning magnitudes, signs, zeros and subnormals.
double fuzz_double(Rng& rng) {
  switch (pick(rng, 0, 5)) {
    case 0: return 0.0;
    case 1: return -0.0;
    case 2: return std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(pick(rng, -1070, 1020)));
    case 3: return 5e-324 * static_cast<double>(pick(rng, 1, 1000));
    default: return rng.uniform(-10.0, 10.0);
  }
}

std::string fuzz_string(Rng& rng) {
  static const std::vector<std::string> pieces = {"block_0.mass", "goal_1.pose_cyl", "floor_friction", "\"quoted\"",
                                                  "tab\t", "ü", "line\\n", "x"};
  std::string s;
  const int n = static_cast<int>(pick(rng, 1, 3));
  for (int i = 0; i < n; ++i) s += pieces[pick(rng, 0, static_cast<int>(pieces.size()) - 1)];
  return s;
}

std::map<std::string, Values> fuzz_assignments(Rng& rng) {
  std::map<std::string, Values> a;
  const int n = static_cast<int>(pick(rng, 0, 4));
  for (int i = 0; i < n; ++i) {
    Values v(pick(rng, 1, 4));
    for (double& x : v) x = fuzz_double(rng);
    a[fuzz_string(rng)] = v;
  }
  return a;
}

WireRequest fuzz_request(Rng& rng) {
  switch (pick(rng, 0, 4)) {
    case 0: {
      ResetRequest m;
      m.family = all_families()[pick(rng, 0, 7)];
      m.params = fuzz_assignments(rng);
      m.config_overrides = fuzz_assignments(rng);
      m.seed = rng.next();
      m.options.action_mode = static_cast<ControlMode>(pick(rng, 0, 5));
      if (pick(rng, 0, 1)) m.options.reward = static_cast<RewardType>(pick(rng, 0, 2));
      return m;
    }
    case 1: {
      StepRequest m;
      m.action.resize(pick(rng, 0, 12));
      for (double& x : m.action) x = fuzz_double(rng);
      m.mode = static_cast<ControlMode>(pick(rng, 0, 5));
      return m;
    }
    case 2: return InterveneRequest{fuzz_assignments(rng)};
    case 3: return SpecQuery{};
    default: return CloseRequest{};
  }
}

WireResponse fuzz_response(Rng& rng) {
  switch (pick(rng, 0, 3)) {
    case 0: {
      ObservationResponse m;
      m.observation.resize(pick(rng, 0, 80));
      for (double& x : m.observation) x = fuzz_double(rng);
      m.reward = fuzz_double(rng);
      m.done = pick(rng, 0, 1) == 1;
      m.info = {{"fractional_success", fuzz_double(rng)}, {"applied", pick(rng, 0, 1) == 1},
                {fuzz_string(rng), static_cast<int>(pick(rng, -5, 500))}};
      return m;
    }
    case 1: return SpecResponse{{{"families", {fuzz_string(rng)}}, {"n", fuzz_double(rng)}}};
    case 2: return ErrorResponse{fuzz_string(rng), fuzz_string(rng)};
    default: return ClosedResponse{};
  }
}

std::vector<double> action_at(int t) {
  std::vector<double> a(9);
  for (int k = 0; k < 9; ++k) a[k] = 0.3 * std::sin(0.05 * t + k) - 0.8;
  return a;
}

}  // namespace

TEST(Wire, RequestRoundTripOnFuzzedMessages) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const WireRequest r = fuzz_request(rng);
    const std::string line = serialize(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(parse_request(line), r) << line;
    EXPECT_EQ(serialize(parse_request(line)), line);
  }
}

TEST(Wire, ResponseRoundTripOnFuzzedMessages) {
  Rng rng(23);
  for (int i = 0; i < 2000; ++i) {
    const WireResponse r = fuzz_response(rng);
    const std::string line = serialize(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    const WireResponse back = parse_response(line);
    EXPECT_EQ(back, r) << line;
    if (auto* o = std::get_if<ObservationResponse>(&r)) {
      const auto& b = std::get<ObservationResponse>(back);
      for (std::size_t k = 0; k < o->observation.size(); ++k) {
        EXPECT_EQ(std::signbit(o->observation[k]), std::signbit(b.observation[k]));
      }
    }
  }
}

TEST(Wire, MalformedInputGetsAnErrorAndTheSessionSurvives) {
  Session s;
  auto code = [&](const std::string& line) {
    const auto r = parse_response(s.handle_line(line));
    return std::holds_alternative<ErrorResponse>(r) ? std::get<ErrorResponse>(r).code : std::string("ok");
  };
  EXPECT_EQ(code("{not json"), "parse");
  EXPECT_EQ(code("[1,2]"), "bad_request");
  EXPECT_EQ(code(R"({"type":"dance"})"), "bad_request");
  EXPECT_EQ(code(R"({"type":"step"})"), "bad_request");
  EXPECT_EQ(code(R"({"type":"reset","task":"juggling"})"), "bad_request");
  EXPECT_EQ(code(R"({"type":"reset","task":"pushing","seed":1})"), "ok");
  EXPECT_EQ(code(R"({"type":"step","action":[1,2,3]})"), "action");
  EXPECT_EQ(code(R"({"type":"step","action":[0,0,0,0,0,0,0,0,0],"mode":"joint_torque"})"), "action");
  EXPECT_EQ(code(R"({"type":"intervene","assignments":{"warp.speed":[1]}})"), "catalog");
  EXPECT_EQ(code(R"({"type":"spec_query"})"), "ok");
}

TEST(Wire, LifecycleErrors) {
  Session s;
  const auto step = s.handle(StepRequest{action_at(0), ControlMode::joint_position});
  ASSERT_TRUE(std::holds_alternative<ErrorResponse>(step));
  EXPECT_EQ(std::get<ErrorResponse>(step).code, "lifecycle");
  const auto iv = s.handle(InterveneRequest{});
  EXPECT_EQ(std::get<ErrorResponse>(iv).code, "lifecycle");
  EXPECT_TRUE(std::holds_alternative<ClosedResponse>(s.handle(CloseRequest{})));
  EXPECT_TRUE(s.closed());
  EXPECT_EQ(std::get<ErrorResponse>(s.handle(SpecQuery{})).code, "lifecycle");
}

TEST(Wire, SessionMatchesTheEnvironment) {
  Session s;
  ResetRequest reset;
  reset.family = Family::stacking2;
  reset.seed = 4;
  const auto first = std::get<ObservationResponse>(s.handle(reset));
  Environment env;
  EXPECT_EQ(first.observation, env.reset(build_task(Family::stacking2, {}, 4), 4));
  for (int t = 0; t < 30; ++t) {
    const auto r = std::get<ObservationResponse>(s.handle(StepRequest{action_at(t), ControlMode::joint_position}));
    const StepResult e = env.step(RobotCommand{ControlMode::joint_position, action_at(t)});
    EXPECT_EQ(r.observation, e.observation);
    EXPECT_EQ(r.reward, e.reward);
    EXPECT_EQ(r.done, e.done);
  }
}

TEST(Wire, SuppressedInterventionReportsNotApplied) {
  Session s;
  const auto before = std::get<ObservationResponse>(s.handle(ResetRequest{}));
  const auto r = std::get<ObservationResponse>(
      s.handle(InterveneRequest{{{"goal_0.pose_cyl", {0.06, 0.5, 0.1, 0.0}}}}));
  EXPECT_FALSE(r.info.at("applied").get<bool>());
  EXPECT_EQ(r.info.at("rejection").at("code"), "floor_level");
  EXPECT_EQ(r.observation, before.observation);
  const auto ok = std::get<ObservationResponse>(s.handle(InterveneRequest{{{"floor_friction", {0.7}}}}));
  EXPECT_TRUE(ok.info.at("applied").get<bool>());
}

TEST(Wire, ConfigOverridesAtReset) {
  Session s;
  ResetRequest reset;
  reset.config_overrides = {{"block_0.mass", {0.05}}};
  const auto r = std::get<ObservationResponse>(s.handle(reset));
  EXPECT_EQ(parse_observation(r.observation).blocks[0].mass, 0.05);
  reset.config_overrides = {{"goal_0.pose_cyl", {0.06, 0.5, 0.1, 0.0}}};
  EXPECT_EQ(std::get<ErrorResponse>(s.handle(reset)).code, "config");
}

TEST(Wire, SpecDocument) {
  Session s;
  const auto doc = std::get<SpecResponse>(s.handle(SpecQuery{})).document;
  EXPECT_EQ(doc.at("families").size(), 8u);
  EXPECT_EQ(doc.at("action_modes").size(), 6u);
  EXPECT_EQ(doc.at("action_length"), 9);
  EXPECT_TRUE(doc.at("catalog").is_object() || doc.at("catalog").is_array());
  EXPECT_FALSE(doc.contains("current_layout"));
  ResetRequest reset;
  reset.family = Family::pick_and_place;
  s.handle(reset);
  const auto live = std::get<SpecResponse>(s.handle(SpecQuery{})).document;
  EXPECT_EQ(live.at("current_layout").at("length"), 65);
}

TEST(Wire, StdioServesInOrderUntilClose) {
  std::istringstream in(
      "{\"type\":\"spec_query\"}\n\n{\"type\":\"reset\",\"task\":\"pushing\"}\ngarbage\n{\"type\":\"close\"}\n"
      "{\"type\":\"spec_query\"}\n");
  std::ostringstream out;
  serve_stream(in, out);
  std::istringstream replies(out.str());
  std::vector<std::string> types;
  for (std::string l; std::getline(replies, l);) types.push_back(nlohmann::json::parse(l).at("type"));
  EXPECT_EQ(types, (std::vector<std::string>{"spec", "observation", "error", "closed"}));
}

TEST(Wire, TcpTraceEqualsInProcessBitwise) {
  TcpServer server(0);
  std::thread loop([&] { server.run(); });
  {
    TcpClient client("127.0.0.1", server.port());
    TcpClient other("127.0.0.1", server.port());
    ResetRequest reset;
    reset.family = Family::pushing;
    reset.seed = 9;
    Environment env;
    const auto r0 = std::get<ObservationResponse>(client.request(WireRequest{reset}));
    EXPECT_EQ(r0.observation, env.reset(build_task(Family::pushing, {}, 9), 9));
    // A second connection has its own environment.
    EXPECT_TRUE(std::holds_alternative<ErrorResponse>(
        other.request(WireRequest{StepRequest{action_at(0), ControlMode::joint_position}})));
    for (int t = 0; t < 40; ++t) {
      const auto r = std::get<ObservationResponse>(
          client.request(WireRequest{StepRequest{action_at(t), ControlMode::joint_position}}));
      const StepResult e = env.step(RobotCommand{ControlMode::joint_position, action_at(t)});
      ASSERT_EQ(r.observation.size(), e.observation.size());
      for (std::size_t k = 0; k < e.observation.size(); ++k) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(r.observation[k]), std::bit_cast<std::uint64_t>(e.observation[k]));
      }
      EXPECT_EQ(std::bit_cast<std::uint64_t>(r.reward), std::bit_cast<std::uint64_t>(e.reward));
    }
    EXPECT_TRUE(std::holds_alternative<ErrorResponse>(parse_response(client.request("{oops"))));
    EXPECT_TRUE(std::holds_alternative<ClosedResponse>(client.request(WireRequest{CloseRequest{}})));
  }
  server.stop();
  loop.join();
}

TEST(Wire, BindFailureIsAStartupError) {
  TcpServer first(0);
  EXPECT_THROW(TcpServer(first.port()), ConfigError);
  EXPECT_THROW(TcpServer(0, "not-an-address"), ConfigError);
}
