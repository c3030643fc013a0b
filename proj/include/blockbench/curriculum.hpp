#pragma once

// Intervention actors on episode schedules, and their composition into
// training curricula.

#include "blockbench/env.hpp"
#include "blockbench/tasks.hpp"

#include <nlohmann/json.hpp>

#include <climits>
#include <optional>
#include <string>
#include <vector>

namespace blockbench {

struct ActorSchedule {
  int start_episode = 0;
  int stop_episode = INT_MAX;
  int timestep_in_episode = 0;  // 0 = at reset
  int episode_periodicity = 1;

  /// Throws ConfigError for start >= stop, periodicity < 1 or a negative step.
  void validate() const;
  bool fires(int episode, int step) const;
  bool operator==(const ActorSchedule&) const = default;
};

enum class ActorType { goal_randomizer, random, fixed };

std::string to_string(ActorType t);
ActorType actor_type_from_string(std::string_view s);

struct InterventionActor {
  ActorType type = ActorType::random;
  ActorSchedule schedule;
  /// Template ids ("block.mass") or instance ids ("block_0.mass"). Empty for
  /// the random actor means every exposed variable.
  std::vector<std::string> variables;
  Space space = Space::A;
  std::map<std::string, Values> values;  // fixed actor only

  bool operator==(const InterventionActor&) const = default;
};

/// The intervention `actor` emits at (episode, step) for the exposed task, or
/// nothing when its schedule does not fire. Deterministic given seed.
std::optional<Intervention> actor_decides(const InterventionActor& actor, int episode, int step,
                                          const TaskInstance& exposed, std::uint64_t seed,
                                          const VariableCatalog& catalog = VariableCatalog::builtin(),
                                          const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Exposed instance ids matched by the actor's variable list.
std::set<std::string> resolve_variables(const std::vector<std::string>& variables, const EnvConfig& exposed);

struct Curriculum {
  std::vector<InterventionActor> actors;

  /// Polls actors in list order; later assignments override earlier ones.
  std::optional<Intervention> decide(int episode, int step, const TaskInstance& exposed, std::uint64_t seed,
                                     const VariableCatalog& catalog = VariableCatalog::builtin(),
                                     const PhysicsConstants& physics = PhysicsConstants::builtin()) const;

  /// 0: no changes; 1: goal poses from A at every reset; 2: every variable
  /// from A at every reset.
  static Curriculum preset(int index);

  bool operator==(const Curriculum&) const = default;
};

/// Resets `env` on `task` and applies the curriculum's reset-time intervention.
struct EpisodeStart {
  Observation observation;
  std::optional<Intervention> intervention;
  bool applied = false;
};

EpisodeStart begin_episode(Environment& env, const TaskInstance& task, const Curriculum& curriculum, int episode,
                           std::uint64_t seed);

/// Applies the curriculum's intervention for the coming step, if any.
std::optional<InterventionOutcome> curriculum_step(Environment& env, const Curriculum& curriculum, int episode,
                                                   std::uint64_t seed, std::optional<Intervention>* emitted = nullptr);

nlohmann::json to_json(const ActorSchedule& s);
ActorSchedule schedule_from_json(const nlohmann::json& j);
nlohmann::json to_json(const InterventionActor& a);
InterventionActor actor_from_json(const nlohmann::json& j);
/// Document: list of {actor_type, schedule, variables, space[, values]}.
nlohmann::json to_json(const Curriculum& c);
Curriculum curriculum_from_json(const nlohmann::json& j);

}  // namespace blockbench
