#pragma once

// Environment lifecycle: reset from a task and config, control steps, and
// do-interventions in the middle of an episode.

#include "blockbench/dynamics.hpp"
#include "blockbench/rewards.hpp"
#include "blockbench/tasks.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace blockbench {

using Observation = std::vector<double>;

/// 28 + 17 per block + 10 per goal part and per obstacle.
int observation_length(int n_blocks, int n_goal_parts, int n_obstacles);

/// Named segments of the structured observation, in order.
nlohmann::json observation_layout(int n_blocks, int n_goal_parts, int n_obstacles);

/// Structured observation split into named fields.
struct ObservationView {
  struct Block {
    Vec3 position;
    Quat orientation;
    Vec3 linear_velocity;
    Vec3 angular_velocity;
    Vec3 size;
    double mass = 0.0;
  };
  struct Part {
    Vec3 position;
    Quat orientation;
    Vec3 size;
  };
  double time_left_fraction = 0.0;
  JointVector joint_positions;
  JointVector joint_velocities;
  FingertipPositions fingertips;
  std::vector<Block> blocks;
  std::vector<Part> goal;
  std::vector<Part> obstacles;
};

/// Throws ActionError when the length does not match the counts.
ObservationView parse_observation(const Observation& o, int n_blocks, int n_goal_parts, int n_obstacles);
/// Infers the counts from the length, assuming one goal part per block and
/// at most one obstacle (true for every shipped family).
ObservationView parse_observation(const Observation& o);

struct EnvOptions {
  ControlMode action_mode = ControlMode::joint_position;
  /// Unset: dense for families that define one, sparse otherwise.
  std::optional<RewardType> reward;
};

struct StepInfo {
  double fractional_success = 0.0;
  int interventions_applied = 0;
  int suppressed = 0;
  double time_left_seconds = 0.0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct InterventionOutcome {
  bool applied = false;
  Observation observation;
  std::optional<Rejection> rejection;
};

class Environment {
 public:
  explicit Environment(EnvOptions options = {},
                       const VariableCatalog& catalog = VariableCatalog::builtin(),
                       const PhysicsConstants& physics = PhysicsConstants::builtin());

  /// Throws ConfigError when the config does not fit the task.
  Observation reset(const TaskInstance& task, const EnvConfig& config, std::uint64_t seed);
  Observation reset(const TaskInstance& task, std::uint64_t seed) { return reset(task, task.config, seed); }

  /// One control period. Throws LifecycleError before reset or after done,
  /// ActionError for malformed actions or a mode other than the configured one.
  StepResult step(const RobotCommand& action);

  /// Suppressed interventions leave the world untouched. Throws CatalogError
  /// or ConfigError for malformed interventions.
  InterventionOutcome do_intervention(const Intervention& iv);

  /// Current values of every exposed variable; block poses and joint
  /// positions are read from the live world.
  EnvConfig exposed_variables() const;

  Observation observe() const;
  double fractional_success() const;
  RewardSnapshot snapshot() const;

  bool live() const { return live_; }
  bool done() const { return done_; }
  int steps() const { return steps_; }
  std::uint64_t seed() const { return seed_; }
  const WorldState& world() const { return world_; }
  /// The task with live block poses.
  TaskInstance task() const;
  const EnvOptions& options() const { return options_; }
  RewardType reward_type() const;
  const PhysicsConstants& physics() const { return physics_; }
  const VariableCatalog& catalog() const { return catalog_; }

  /// Replaces the whole world (replay support); the task is kept.
  void restore(const WorldState& w, int steps);

 private:
  void load_world();

  EnvOptions options_;
  const VariableCatalog& catalog_;
  PhysicsConstants physics_;
  TaskInstance task_;
  WorldState world_;
  bool live_ = false;
  bool done_ = false;
  int steps_ = 0;
  int applied_ = 0;
  int suppressed_ = 0;
  std::uint64_t seed_ = 0;
};

}  // namespace blockbench
