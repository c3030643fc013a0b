#pragma once

// Task generators: the eight goal-shape families, their default instances,
// goal samplers, family constraints and episode limits.

#include "blockbench/geometry.hpp"
#include "blockbench/param_space.hpp"
#include "blockbench/physics_constants.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace blockbench {

enum class Family {
  pushing,
  picking,
  pick_and_place,
  stacking2,
  towers,
  stacked_blocks,
  creative_stacked_blocks,
  general
};

std::string to_string(Family f);
Family family_from_string(std::string_view s);  // throws TaskError
const std::vector<Family>& all_families();

/// Families whose block count is a free parameter.
bool has_free_block_count(Family f);

struct TaskInstance {
  Family family = Family::pushing;
  /// Complete assignment of every variable this instance exposes. Blocks and
  /// goal parts are built from it; `blocks` may later carry live poses.
  EnvConfig config;
  std::vector<Cuboid> blocks;
  std::vector<Cuboid> obstacles;
  GoalShape goal;
  /// Orientation of each goal part with its heading removed. Only settled
  /// goals carry a tilt; pose variables store position and heading.
  std::vector<Quat> goal_tilt;
  int episode_limit_steps = 0;

  int num_blocks() const { return static_cast<int>(blocks.size()); }
};

/// num_blocks × 10 s × control rate.
int episode_time_limit(int num_blocks, int control_rate_hz);

using TaskParams = std::map<std::string, Values>;

/// Default instance of `family` when `params` is empty. Recognized params:
/// num_blocks (free-count families), goal_height (picking), tower_dims
/// (towers). Throws TaskError for parameters outside their spaces.
TaskInstance build_task(Family family, const TaskParams& params = {}, std::uint64_t seed = 0,
                        const VariableCatalog& catalog = VariableCatalog::builtin(),
                        const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Variable assignments that move the goal to a new member of the family,
/// drawn from `space`. Block count and block sizes are kept.
Intervention sample_goal_intervention(const TaskInstance& task, Space space, std::uint64_t seed,
                                      const VariableCatalog& catalog = VariableCatalog::builtin(),
                                      const PhysicsConstants& physics = PhysicsConstants::builtin());

GoalShape sample_goal(const TaskInstance& task, Space space, std::uint64_t seed,
                      const VariableCatalog& catalog = VariableCatalog::builtin(),
                      const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Family-aware sampler: draws the listed instance ids from `space` while
/// keeping the result inside the family (shared sizes for column families,
/// non-overlapping floor placements, goals via the goal sampler). Ids that
/// cannot be drawn without leaving the family are left out.
Intervention sample_variables(const TaskInstance& task, const std::set<std::string>& ids,
                              Space space, std::uint64_t seed,
                              const VariableCatalog& catalog = VariableCatalog::builtin(),
                              const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Adds the assignments an intervention implies inside its family (goal sizes
/// follow block sizes, tower layout follows tower_dims, picking goal_height
/// mirrors the goal height). Explicit assignments are never overridden.
Intervention complete_intervention(const TaskInstance& task, const Intervention& iv,
                                   const VariableCatalog& catalog = VariableCatalog::builtin());

struct InterveneOptions {
  bool complete = true;  // add implied assignments first
};

/// Applies `iv` to the instance. Only assigned blocks and goal parts are
/// rebuilt; everything else is carried over bit for bit. Returns a rejection
/// when a range check or a family constraint fails. Throws CatalogError or
/// ConfigError for ids the instance does not expose or wrong dimensions.
std::variant<TaskInstance, Rejection> intervene(
    const TaskInstance& task, const Intervention& iv, const InterveneOptions& options = {},
    const VariableCatalog& catalog = VariableCatalog::builtin(),
    const PhysicsConstants& physics = PhysicsConstants::builtin());

std::optional<Rejection> validate_intervention(
    const TaskInstance& task, const Intervention& iv,
    const VariableCatalog& catalog = VariableCatalog::builtin(),
    const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Instance for a complete config given literally (no implied assignments).
/// Throws ConfigError when the config is incomplete or outside the family.
TaskInstance with_config(const TaskInstance& task, const EnvConfig& config,
                         const VariableCatalog& catalog = VariableCatalog::builtin(),
                         const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Largest displacement of any part when the parts are dropped from exactly
/// their poses.
double settle_displacement(const std::vector<Cuboid>& parts, std::uint64_t seed,
                           const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Scene document {family, blocks, obstacles, goal, episode_limit_steps, config}.
nlohmann::json to_json(const TaskInstance& t);
TaskInstance task_from_json(const nlohmann::json& j,
                            const VariableCatalog& catalog = VariableCatalog::builtin(),
                            const PhysicsConstants& physics = PhysicsConstants::builtin());

}  // namespace blockbench
