// blockbench command line: demo, task, overlap, evaluate, serve, record, replay.
// Exit codes: 0 success, 1 usage, 2 runtime, 3 replay divergence.

#include "blockbench/evaluation.hpp"
#include "blockbench/geometry.hpp"
#include "blockbench/harness.hpp"
#include "blockbench/wire.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace blockbench;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kDiverged = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json parse_json_arg(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

// Writes to `path`, or stdout for "-" or empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string physics;
};

// Flags override the config document; the document overrides defaults.
struct Settings {
  json doc = json::object();
  PhysicsConstants physics = PhysicsConstants::builtin();

  template <class T>
  T get(const char* key, T fallback) const {
    return doc.contains(key) ? doc.at(key).get<T>() : fallback;
  }
};

Settings load_settings(const Globals& g) {
  Settings s;
  if (!g.config.empty()) {
    s.doc = read_json_file(g.config);
    if (!s.doc.is_object()) throw ConfigError("config document must be an object");
  }
  if (g.seed_given) s.doc["seed"] = g.seed;
  if (!g.physics.empty()) s.physics = physics_with_overrides(read_json_file(g.physics));
  return s;
}

RunConfig run_from(const Settings& s, const std::string& family, const std::string& policy, int curriculum,
                   int episode, int steps) {
  json j = s.doc;
  for (const char* k : {"protocols", "episodes", "threads"}) j.erase(k);
  if (!family.empty()) j["family"] = family;
  if (!policy.empty()) j["policy"] = policy;
  if (curriculum >= 0) j["curriculum"] = curriculum;
  if (episode >= 0) j["episode"] = episode;
  if (steps >= 0) j["max_steps"] = steps;
  return run_config_from_json(j);
}

int cmd_demo(const Settings& s, const std::string& family, const std::string& policy, int curriculum, int steps) {
  RunConfig run = run_from(s, family, policy.empty() && !s.doc.contains("policy") ? "push" : policy, curriculum, -1,
                           steps);
  const EpisodeLog log = record(run, s.physics);
  double total = 0.0;
  for (const LogRecord& r : log.records) {
    total += r.reward;
    if ((r.t + 1) % kSnapshotEvery == 0 || r.t + 1 == static_cast<int>(log.records.size())) {
      std::cout << "step " << r.t + 1 << "  reward " << r.reward << "  return " << total
                << "  fractional_success " << r.fractional_success << '\n';
    }
  }
  const double final = log.records.empty() ? 0.0 : log.records.back().fractional_success;
  std::cout << json{{"family", to_string(run.family)},
                    {"policy", run.policy},
                    {"steps", log.records.size()},
                    {"return", total},
                    {"final_fractional_success", final}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_task(const Settings& s, const std::string& family, const std::string& params, const std::string& sample,
             const std::string& out) {
  RunConfig run = run_from(s, family, "", -1, -1, -1);
  if (!params.empty()) run.params = parse_json_arg(params, "--params").get<TaskParams>();
  TaskInstance task = build_task(run.family, run.params, run.seed, VariableCatalog::builtin(), s.physics);
  if (!sample.empty()) {
    const Intervention iv = sample_goal_intervention(task, space_from_string(sample), run.seed,
                                                     VariableCatalog::builtin(), s.physics);
    auto next = intervene(task, iv, {}, VariableCatalog::builtin(), s.physics);
    if (auto* rej = std::get_if<Rejection>(&next)) throw TaskError("goal sample rejected: " + rej->detail);
    task = std::get<TaskInstance>(std::move(next));
  }
  emit(out, to_json(task).dump(2) + "\n");
  return 0;
}

int cmd_overlap(const Settings& s, const std::string& scene, const std::string& family) {
  TaskInstance task = scene.empty()
                          ? build_task(run_from(s, family, "", -1, -1, -1).family, {}, 0, VariableCatalog::builtin(),
                                       s.physics)
                          : task_from_json(read_json_file(scene), VariableCatalog::builtin(), s.physics);
  OverlapOptions opt;
  opt.voxel_edge = s.physics.voxel_edge;
  json pairs = json::array();
  for (std::size_t i = 0; i < task.blocks.size(); ++i) {
    for (std::size_t j = 0; j < task.goal.parts.size(); ++j) {
      pairs.push_back({{"block", i}, {"goal_part", j}, {"volume", box_pair_overlap(task.blocks[i], task.goal.parts[j])}});
    }
  }
  std::cout << json{{"fractional_success", fractional_overlap(task.blocks, task.goal, opt)},
                    {"imposed_goal_parts", task.goal.imposed_parts().size()},
                    {"pairs", pairs}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_evaluate(const Settings& s, const std::string& family_flag, std::string protocols, int episodes,
                 std::string policy, int threads, const std::string& format, const std::string& out,
                 const std::string& reports_out) {
  const Family family = family_from_string(family_flag.empty() ? s.get<std::string>("family", "pushing") : family_flag);
  if (protocols.empty()) protocols = s.get<std::string>("protocols", "all");
  if (episodes < 0) episodes = s.get<int>("episodes", 200);
  if (policy.empty()) policy = s.get<std::string>("policy", "push");
  if (threads < 0) threads = s.get<int>("threads", 1);
  if (episodes < 1) throw ConfigError("--episodes must be >= 1");

  std::vector<ProtocolSpec> chosen;
  const auto suite = default_protocol_suite(family);
  if (protocols == "all") {
    chosen = suite;
  } else {
    std::stringstream ss(protocols);
    std::string id;
    while (std::getline(ss, id, ',')) {
      auto it = std::find_if(suite.begin(), suite.end(), [&](const ProtocolSpec& p) { return p.id == id; });
      if (it == suite.end()) throw ConfigError("unknown protocol '" + id + "'");
      chosen.push_back(*it);
    }
  }
  make_policy(policy);  // rejects unknown names before any work

  RunOptions opt;
  opt.episodes = episodes;
  opt.seed = s.get<std::uint64_t>("seed", 0);
  opt.threads = threads;
  const PolicyFactory factory = [&](std::uint64_t seed) { return make_policy(policy, seed); };
  std::vector<ScoreReport> reports;
  json audit = json::object();
  for (const ProtocolSpec& p : chosen) {
    reports.push_back(run_protocol(p, factory, opt, policy, VariableCatalog::builtin(), s.physics));
    const auto violations = audit_space(reports.back());
    if (!violations.empty()) audit[p.id] = violations;
    std::cerr << p.id << "  mean " << reports.back().mean() << "  failed " << reports.back().failed_count() << '\n';
  }
  const BenchmarkTable table = aggregate_report(reports);
  if (format == "csv") {
    emit(out, to_csv(table));
  } else {
    json j = to_json(table);
    j["policy"] = policy;
    j["episodes"] = episodes;
    j["suite_version"] = kProtocolSuiteVersion;
    j["space_violations"] = audit;
    emit(out, j.dump(2) + "\n");
  }
  if (!reports_out.empty()) {
    json all = json::array();
    for (const auto& r : reports) all.push_back(to_json(r));
    emit(reports_out, all.dump() + "\n");
  }
  return audit.empty() ? 0 : kRuntime;
}

int cmd_serve(const Settings& s, bool use_stdio, int port, const std::string& host) {
  if (use_stdio) {
    serve_stream(std::cin, std::cout, s.physics);
    return 0;
  }
  TcpServer server(port, host, s.physics);
  std::cerr << "listening on " << host << ":" << server.port() << '\n';
  server.run();
  return 0;
}

int cmd_record(const Settings& s, const std::string& family, const std::string& policy, int curriculum, int episode,
               int steps, bool observations, const std::string& out) {
  RunConfig run = run_from(s, family, policy, curriculum, episode, steps);
  if (observations) run.log_observations = true;
  const EpisodeLog log = record(run, s.physics);
  std::ostringstream ss;
  write_log(ss, log);
  emit(out, ss.str());
  if (!out.empty() && out != "-") {
    std::cerr << "recorded " << log.records.size() << " steps to " << out << '\n';
  }
  return 0;
}

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  const ReplayVerdict v = replay(in);
  std::cout << to_json(v).dump() << '\n';
  return v.pass ? 0 : kDiverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blockbench: block manipulation benchmark"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run config JSON document")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--physics-constants", g.physics, "JSON overrides of the physics constants")
      ->check(CLI::ExistingFile);

  std::string family, policy, params, sample, out, scene, protocols, format = "json", reports_out, host = "127.0.0.1";
  std::string log_path;
  int curriculum = -1, episode = -1, steps = -1, episodes = -1, threads = -1, port = 0;
  bool use_stdio = false, observations = false;

  auto* demo = app.add_subcommand("demo", "Run one episode and print progress");
  demo->add_option("--family", family);
  demo->add_option("--policy", policy)->check(CLI::IsMember(policy_names()));
  demo->add_option("--curriculum", curriculum)->check(CLI::Range(0, 2));
  demo->add_option("--steps", steps, "Stop after this many steps");

  auto* task = app.add_subcommand("task", "Print a task scene as JSON");
  task->add_option("--family", family);
  task->add_option("--params", params, "Task parameters as a JSON object");
  task->add_option("--sample", sample, "Draw a goal from space A or B")->check(CLI::IsMember({"A", "B"}));
  task->add_option("-o,--output", out);

  auto* overlap = app.add_subcommand("overlap", "Fractional success and pair overlaps of a scene");
  overlap->add_option("--scene", scene, "Scene JSON (default: the family's default task)")->check(CLI::ExistingFile);
  overlap->add_option("--family", family);

  auto* evaluate = app.add_subcommand("evaluate", "Run evaluation protocols and print the table");
  evaluate->add_option("--family", family);
  evaluate->add_option("--protocols", protocols, "Comma-separated ids, or all");
  evaluate->add_option("--episodes", episodes);
  evaluate->add_option("--policy", policy)->check(CLI::IsMember(policy_names()));
  evaluate->add_option("--threads", threads)->check(CLI::PositiveNumber);
  evaluate->add_option("--format", format)->check(CLI::IsMember({"json", "csv"}));
  evaluate->add_option("-o,--output", out);
  evaluate->add_option("--reports", reports_out, "Write per-episode reports JSON here");

  auto* serve = app.add_subcommand("serve", "Serve the wire protocol");
  serve->add_flag("--stdio", use_stdio, "Serve one session on stdin/stdout");
  serve->add_option("--port", port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);

  auto* rec = app.add_subcommand("record", "Record one episode log");
  rec->add_option("--family", family);
  rec->add_option("--policy", policy)->check(CLI::IsMember(policy_names()));
  rec->add_option("--curriculum", curriculum)->check(CLI::Range(0, 2));
  rec->add_option("--episode", episode);
  rec->add_option("--steps", steps);
  rec->add_flag("--observations", observations, "Log full observations");
  rec->add_option("-o,--output", out, "Log file (default stdout)");

  auto* rep = app.add_subcommand("replay", "Verify an episode log");
  rep->add_option("log", log_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    const Settings s = load_settings(g);
    if (*demo) return cmd_demo(s, family, policy, curriculum, steps);
    if (*task) return cmd_task(s, family, params, sample, out);
    if (*overlap) return cmd_overlap(s, scene, family);
    if (*evaluate) {
      return cmd_evaluate(s, family, protocols, episodes, policy, threads, format, out, reports_out);
    }
    if (*serve) return cmd_serve(s, use_stdio, port, host);
    if (*rec) return cmd_record(s, family, policy, curriculum, episode, steps, observations, out);
    if (*rep) return cmd_replay(log_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
