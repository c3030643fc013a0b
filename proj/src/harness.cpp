#include "blockbench/harness.hpp"

#include <bit>
#include <cstdio>
#include <istream>
#include <ostream>

namespace blockbench {

namespace {

using nlohmann::json;

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

json to_json(const RobotCommand& a) { return {{"mode", to_string(a.mode)}, {"values", a.values}}; }

RobotCommand command_from_json(const json& j) {
  RobotCommand a;
  a.mode = control_mode_from_string(j.at("mode").get<std::string>());
  a.values = j.at("values").get<std::vector<double>>();
  return a;
}

json to_json(const LoggedIntervention& li) {
  json j{{"intervention", blockbench::to_json(li.intervention)}, {"applied", li.applied}};
  if (li.observation) j["observation"] = *li.observation;
  return j;
}

LoggedIntervention logged_from_json(const json& j) {
  LoggedIntervention li;
  li.intervention = intervention_from_json(j.at("intervention"));
  li.applied = j.at("applied").get<bool>();
  if (j.contains("observation")) li.observation = j.at("observation").get<Observation>();
  return li;
}

json interventions_json(const std::vector<LoggedIntervention>& v) {
  json a = json::array();
  for (const auto& li : v) a.push_back(to_json(li));
  return a;
}

std::vector<LoggedIntervention> interventions_from_json(const json& j) {
  std::vector<LoggedIntervention> v;
  for (const auto& e : j) v.push_back(logged_from_json(e));
  return v;
}

json to_json(const LogRecord& r) {
  json j{{"t", r.t},
         {"action", to_json(r.action)},
         {"obs_digest", r.obs_digest},
         {"reward", r.reward},
         {"fractional_success", r.fractional_success},
         {"interventions", interventions_json(r.interventions)}};
  if (r.observation) j["observation"] = *r.observation;
  if (r.snapshot) j["snapshot"] = blockbench::to_json(*r.snapshot);
  return j;
}

LogRecord record_from_json(const json& j) {
  LogRecord r;
  r.t = j.at("t").get<int>();
  r.action = command_from_json(j.at("action"));
  r.obs_digest = j.at("obs_digest").get<std::string>();
  r.reward = j.at("reward").get<double>();
  r.fractional_success = j.at("fractional_success").get<double>();
  r.interventions = interventions_from_json(j.at("interventions"));
  if (j.contains("observation")) r.observation = j.at("observation").get<Observation>();
  if (j.contains("snapshot")) r.snapshot = world_from_json(j.at("snapshot"));
  return r;
}

EpisodeLog header_from_json(const json& h) {
  if (!h.is_object() || h.value("schema", std::string()) != kEpisodeLogSchema) {
    throw LogError(std::string("episode log schema is not ") + kEpisodeLogSchema);
  }
  try {
    EpisodeLog log;
    log.run = run_config_from_json(h.at("run"));
    log.physics = PhysicsConstants::from_json(h.at("physics"));
    log.task = h.at("task");
    log.initial = world_from_json(h.at("initial_state"));
    log.initial_digest = h.at("initial_digest").get<std::string>();
    if (h.contains("initial_observation")) log.initial_observation = h.at("initial_observation").get<Observation>();
    log.reset_interventions = interventions_from_json(h.at("reset_interventions"));
    return log;
  } catch (const json::exception& e) {
    throw LogError(std::string("episode log header: ") + e.what());
  } catch (const Error& e) {
    throw LogError(std::string("episode log header: ") + e.what());
  }
}

ReplayVerdict diverged(ReplayVerdict v, int t, std::string detail) {
  v.pass = false;
  v.first_divergence = t;
  v.detail = std::move(detail);
  return v;
}

}  // namespace

std::string obs_digest(const Observation& o) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double x : o) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool RunConfig::operator==(const RunConfig& o) const {
  return family == o.family && params == o.params && seed == o.seed && episode == o.episode &&
         curriculum == o.curriculum && policy == o.policy && env.action_mode == o.env.action_mode &&
         env.reward == o.env.reward && max_steps == o.max_steps && log_observations == o.log_observations;
}

nlohmann::json to_json(const RunConfig& c) {
  json j{{"family", to_string(c.family)},
         {"params", c.params},
         {"seed", c.seed},
         {"episode", c.episode},
         {"curriculum", to_json(c.curriculum)},
         {"policy", c.policy},
         {"action_mode", to_string(c.env.action_mode)},
         {"max_steps", c.max_steps},
         {"log_observations", c.log_observations}};
  j["reward"] = c.env.reward ? json(to_string(*c.env.reward)) : json(nullptr);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be an object");
  try {
    RunConfig c;
    if (j.contains("family")) c.family = family_from_string(j.at("family").get<std::string>());
    if (j.contains("params")) c.params = j.at("params").get<TaskParams>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("episode")) c.episode = j.at("episode").get<int>();
    if (j.contains("curriculum")) c.curriculum = curriculum_from_json(j.at("curriculum"));
    if (j.contains("policy")) c.policy = j.at("policy").get<std::string>();
    if (j.contains("action_mode")) c.env.action_mode = control_mode_from_string(j.at("action_mode").get<std::string>());
    if (j.contains("reward") && !j.at("reward").is_null()) {
      c.env.reward = reward_type_from_string(j.at("reward").get<std::string>());
    }
    if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<int>();
    if (j.contains("log_observations")) c.log_observations = j.at("log_observations").get<bool>();
    if (c.max_steps < 0) throw ConfigError("max_steps must be >= 0");
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  } catch (const TaskError& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

PhysicsConstants physics_with_overrides(const nlohmann::json& overrides, const PhysicsConstants& base) {
  if (!overrides.is_object()) throw ConfigError("physics constants document must be an object");
  json merged = base.to_json();
  for (const auto& [k, v] : overrides.items()) {
    if (!merged.contains(k)) throw ConfigError("unknown physics constant '" + k + "'");
    merged[k] = v;
  }
  try {
    return PhysicsConstants::from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("physics constants: ") + e.what());
  }
}

void write_log(std::ostream& out, const EpisodeLog& log) {
  json h{{"schema", kEpisodeLogSchema},
         {"run", to_json(log.run)},
         {"physics", log.physics.to_json()},
         {"task", log.task},
         {"initial_state", to_json(log.initial)},
         {"initial_digest", log.initial_digest},
         {"reset_interventions", interventions_json(log.reset_interventions)}};
  if (log.initial_observation) h["initial_observation"] = *log.initial_observation;
  out << h.dump() << '\n';
  for (const LogRecord& r : log.records) out << to_json(r).dump() << '\n';
}

namespace {

struct ParsedLog {
  EpisodeLog log;
  std::optional<int> corrupt_at;  // step index of the first unreadable record
  std::string corrupt_detail;
};

ParsedLog parse_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw LogError("empty episode log");
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw LogError(std::string("episode log header: ") + e.what());
  }
  ParsedLog p{header_from_json(h), std::nullopt, {}};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const int expected = p.log.records.empty() ? 0 : p.log.records.back().t + 1;
    try {
      p.log.records.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      p.corrupt_at = expected;
      p.corrupt_detail = std::string("unreadable record: ") + e.what();
      break;
    }
  }
  return p;
}

}  // namespace

EpisodeLog read_log(std::istream& in) {
  ParsedLog p = parse_log(in);
  if (p.corrupt_at) throw LogError("record " + std::to_string(*p.corrupt_at) + ": " + p.corrupt_detail);
  return std::move(p.log);
}

EpisodeLog record(const RunConfig& run, const PhysicsConstants& physics) {
  if (run.env.action_mode != ControlMode::joint_position) {
    throw ConfigError("scripted policies emit joint_position commands");
  }
  const VariableCatalog& catalog = VariableCatalog::builtin();
  EpisodeLog log;
  log.run = run;
  log.physics = physics;
  Environment env(run.env, catalog, physics);
  const TaskInstance task = build_task(run.family, run.params, run.seed, catalog, physics);
  log.task = to_json(task);
  Observation obs = env.reset(task, run.seed);
  if (auto iv = run.curriculum.decide(run.episode, 0, env.task(), run.seed, catalog, physics)) {
    const InterventionOutcome r = env.do_intervention(*iv);
    obs = r.observation;
    log.reset_interventions.push_back({*iv, r.applied, std::nullopt});
    if (run.log_observations) log.reset_interventions.back().observation = obs;
  }
  log.initial = env.world();
  log.initial_digest = obs_digest(obs);
  if (run.log_observations) log.initial_observation = obs;

  auto policy = make_policy(run.policy, run.seed);
  policy->reset();
  const int limit = run.max_steps > 0 ? std::min(run.max_steps, task.episode_limit_steps) : task.episode_limit_steps;
  while (!env.done() && env.steps() < limit) {
    LogRecord rec;
    rec.t = env.steps();
    std::optional<Intervention> emitted;
    if (auto r = curriculum_step(env, run.curriculum, run.episode, run.seed, &emitted)) {
      obs = r->observation;
      rec.interventions.push_back({*emitted, r->applied, std::nullopt});
      if (run.log_observations) rec.interventions.back().observation = obs;
    }
    rec.action = policy->act(obs);
    const StepResult s = env.step(rec.action);
    obs = s.observation;
    rec.obs_digest = obs_digest(obs);
    rec.reward = s.reward;
    rec.fractional_success = s.info.fractional_success;
    if (run.log_observations) rec.observation = obs;
    if (env.steps() % kSnapshotEvery == 0) rec.snapshot = env.world();
    log.records.push_back(std::move(rec));
  }
  return log;
}

nlohmann::json to_json(const ReplayVerdict& v) {
  json j{{"verdict", v.pass ? "pass" : "fail"}, {"records", v.records}};
  j["first_divergence"] = v.first_divergence ? json(*v.first_divergence) : json(nullptr);
  if (!v.detail.empty()) j["detail"] = v.detail;
  return j;
}

ReplayVerdict replay(const EpisodeLog& log) {
  ReplayVerdict v;
  v.records = static_cast<int>(log.records.size());
  const VariableCatalog& catalog = VariableCatalog::builtin();
  const RunConfig& run = log.run;
  Environment env(run.env, catalog, log.physics);
  try {
    const TaskInstance task = build_task(run.family, run.params, run.seed, catalog, log.physics);
    if (to_json(task) != log.task) return diverged(v, -1, "scene differs from the logged one");
    env.reset(task, run.seed);
    for (const LoggedIntervention& li : log.reset_interventions) {
      if (env.do_intervention(li.intervention).applied != li.applied) {
        return diverged(v, -1, "reset intervention outcome differs");
      }
    }
  } catch (const Error& e) {
    return diverged(v, -1, e.what());
  }
  if (!(env.world() == log.initial) || obs_digest(env.observe()) != log.initial_digest) {
    return diverged(v, -1, "initial state differs");
  }

  for (const LogRecord& r : log.records) {
    if (r.t != env.steps()) return diverged(v, r.t, "record out of sequence");
    try {
      for (const LoggedIntervention& li : r.interventions) {
        if (env.do_intervention(li.intervention).applied != li.applied) {
          return diverged(v, r.t, "intervention outcome differs");
        }
      }
      const StepResult s = env.step(r.action);
      if (obs_digest(s.observation) != r.obs_digest) return diverged(v, r.t, "observation digest differs");
      if (!same_bits(s.reward, r.reward)) return diverged(v, r.t, "reward differs");
      if (!same_bits(s.info.fractional_success, r.fractional_success)) {
        return diverged(v, r.t, "fractional success differs");
      }
      if (r.snapshot && !(env.world() == *r.snapshot)) return diverged(v, r.t, "snapshot differs");
    } catch (const Error& e) {
      return diverged(v, r.t, e.what());
    }
  }
  return v;
}

ReplayVerdict replay(std::istream& in) {
  ParsedLog p = parse_log(in);
  ReplayVerdict v = replay(p.log);
  if (v.pass && p.corrupt_at) {
    v = diverged(v, *p.corrupt_at, p.corrupt_detail);
  }
  return v;
}

}  // namespace blockbench
