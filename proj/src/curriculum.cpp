#include "blockbench/curriculum.hpp"

#include "blockbench/rng.hpp"

namespace blockbench {

void ActorSchedule::validate() const {
  if (start_episode >= stop_episode) throw ConfigError("schedule: start_episode must be below stop_episode");
  if (episode_periodicity < 1) throw ConfigError("schedule: episode_periodicity must be at least 1");
  if (timestep_in_episode < 0 || start_episode < 0) throw ConfigError("schedule: negative episode or step");
}

bool ActorSchedule::fires(int episode, int step) const {
  return start_episode <= episode && episode < stop_episode &&
         (episode - start_episode) % episode_periodicity == 0 && step == timestep_in_episode;
}

std::string to_string(ActorType t) {
  switch (t) {
    case ActorType::goal_randomizer: return "goal_randomizer";
    case ActorType::random: return "random";
    case ActorType::fixed: return "fixed";
  }
  return "random";
}

ActorType actor_type_from_string(std::string_view s) {
  for (ActorType t : {ActorType::goal_randomizer, ActorType::random, ActorType::fixed}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown actor type '" + std::string(s) + "'");
}

std::set<std::string> resolve_variables(const std::vector<std::string>& variables, const EnvConfig& exposed) {
  std::set<std::string> out;
  if (variables.empty()) {
    for (const auto& [id, v] : exposed.values()) out.insert(id);
    return out;
  }
  for (const std::string& want : variables) {
    bool matched = false;
    for (const auto& [id, v] : exposed.values()) {
      if (id == want || split_instance_id(id).first == want) {
        out.insert(id);
        matched = true;
      }
    }
    if (!matched) throw CatalogError("variable '" + want + "' is not exposed by this environment");
  }
  return out;
}

std::optional<Intervention> actor_decides(const InterventionActor& actor, int episode, int step,
                                          const TaskInstance& exposed, std::uint64_t seed,
                                          const VariableCatalog& catalog, const PhysicsConstants& physics) {
  if (!actor.schedule.fires(episode, step)) return std::nullopt;
  const std::uint64_t s = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(episode)),
                                      static_cast<std::uint64_t>(step));
  Intervention iv;
  switch (actor.type) {
    case ActorType::goal_randomizer: {
      const Intervention g = sample_goal_intervention(exposed, actor.space, s, catalog, physics);
      for (const auto& [id, v] : g.assignments) {
        if (split_instance_id(id).first == "goal.pose_cyl") iv.assignments[id] = v;
      }
      break;
    }
    case ActorType::random:
      iv = sample_variables(exposed, resolve_variables(actor.variables, exposed.config), actor.space, s, catalog,
                            physics);
      break;
    case ActorType::fixed:
      iv.assignments = actor.values;
      break;
  }
  iv.timing = step == 0 ? Timing{Timing::Kind::on_reset, 0} : Timing{Timing::Kind::at_step, step};
  return iv;
}

std::optional<Intervention> Curriculum::decide(int episode, int step, const TaskInstance& exposed,
                                               std::uint64_t seed, const VariableCatalog& catalog,
                                               const PhysicsConstants& physics) const {
  std::optional<Intervention> merged;
  for (std::size_t k = 0; k < actors.size(); ++k) {
    auto iv = actor_decides(actors[k], episode, step, exposed, derive_seed(seed, k), catalog, physics);
    if (!iv) continue;
    if (!merged) {
      merged = std::move(iv);
    } else {
      for (auto& [id, v] : iv->assignments) merged->assignments[id] = v;
    }
  }
  return merged;
}

Curriculum Curriculum::preset(int index) {
  Curriculum c;
  switch (index) {
    case 0: break;
    case 1: {
      InterventionActor a;
      a.type = ActorType::goal_randomizer;
      c.actors.push_back(a);
      break;
    }
    case 2: {
      InterventionActor a;
      a.type = ActorType::random;
      c.actors.push_back(a);
      break;
    }
    default: throw ConfigError("curriculum presets are 0, 1 and 2");
  }
  return c;
}

EpisodeStart begin_episode(Environment& env, const TaskInstance& task, const Curriculum& curriculum, int episode,
                           std::uint64_t seed) {
  EpisodeStart out;
  out.observation = env.reset(task, seed);
  out.intervention = curriculum.decide(episode, 0, env.task(), seed, env.catalog(), env.physics());
  if (out.intervention) {
    const InterventionOutcome r = env.do_intervention(*out.intervention);
    out.applied = r.applied;
    out.observation = r.observation;
  }
  return out;
}

std::optional<InterventionOutcome> curriculum_step(Environment& env, const Curriculum& curriculum, int episode,
                                                   std::uint64_t seed, std::optional<Intervention>* emitted) {
  if (env.steps() == 0) return std::nullopt;  // handled by begin_episode
  auto iv = curriculum.decide(episode, env.steps(), env.task(), seed, env.catalog(), env.physics());
  if (emitted) *emitted = iv;
  if (!iv) return std::nullopt;
  return env.do_intervention(*iv);
}

nlohmann::json to_json(const ActorSchedule& s) {
  return {{"start_episode", s.start_episode},
          {"stop_episode", s.stop_episode},
          {"timestep_in_episode", s.timestep_in_episode},
          {"episode_periodicity", s.episode_periodicity}};
}

ActorSchedule schedule_from_json(const nlohmann::json& j) {
  ActorSchedule s;
  s.start_episode = j.value("start_episode", 0);
  s.stop_episode = j.value("stop_episode", INT_MAX);
  s.timestep_in_episode = j.value("timestep_in_episode", 0);
  s.episode_periodicity = j.value("episode_periodicity", 1);
  s.validate();
  return s;
}

nlohmann::json to_json(const InterventionActor& a) {
  nlohmann::json j = {{"actor_type", to_string(a.type)},
                      {"schedule", to_json(a.schedule)},
                      {"variables", a.variables},
                      {"space", to_string(a.space)}};
  if (a.type == ActorType::fixed) j["values"] = a.values;
  return j;
}

InterventionActor actor_from_json(const nlohmann::json& j) {
  try {
    InterventionActor a;
    a.type = actor_type_from_string(j.at("actor_type").get<std::string>());
    a.schedule = schedule_from_json(j.value("schedule", nlohmann::json::object()));
    a.variables = j.value("variables", std::vector<std::string>{});
    a.space = space_from_string(j.value("space", std::string("A")));
    if (a.space == Space::AorB) throw ConfigError("actor space must be A or B");
    if (j.contains("values")) a.values = j.at("values").get<std::map<std::string, Values>>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("curriculum actor: ") + e.what());
  }
}

nlohmann::json to_json(const Curriculum& c) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : c.actors) j.push_back(to_json(a));
  return j;
}

Curriculum curriculum_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return Curriculum::preset(j.get<int>());
  if (!j.is_array()) throw ConfigError("curriculum document must be a list of actors or a preset index");
  Curriculum c;
  for (const auto& a : j) c.actors.push_back(actor_from_json(a));
  return c;
}

}  // namespace blockbench
