#pragma once

// Oriented-cuboid geometry: exact pairwise overlap, the voxelized fractional
// goal coverage, and settle-drop goal synthesis.

#include "blockbench/physics_constants.hpp"
#include "blockbench/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace blockbench {

struct Cuboid {
  Pose pose;
  Vec3 size = Vec3::Constant(0.065);  // full edge lengths
  double mass = 0.0;
  Vec3 color = Vec3::Zero();

  Vec3 half() const { return 0.5 * size; }
  double volume() const { return size.x() * size.y() * size.z(); }
  std::array<Vec3, 8> corners() const;
  /// Closed containment test with an absolute tolerance.
  bool contains(const Vec3& p, double tol = 0.0) const;
  /// Lowest world z over the corners.
  double lowest_z() const;
};

struct GoalShape {
  std::vector<Cuboid> parts;
  std::vector<bool> imposed;  // same length as parts

  /// Parts that count towards the metric.
  std::vector<Cuboid> imposed_parts() const;
};

/// Exact intersection volume of two oriented boxes. Symmetric bit-for-bit.
double box_pair_overlap(const Cuboid& a, const Cuboid& b);

struct OverlapOptions {
  double voxel_edge = 0.005;
  bool exact_fast_path = true;  // single block vs single imposed part
};

/// volume(blocks ∪ ∩ imposed goal ∪) / volume(imposed goal ∪), in [0, 1].
/// Throws MetricUndefined when no goal part is imposed.
double fractional_overlap(std::span<const Cuboid> blocks, const GoalShape& goal,
                          const OverlapOptions& options = {});

struct SettleOptions {
  double gravity_z = -9.81;
  double floor_friction = 0.5;
  double stage_friction = 0.5;
};

struct SettleResult {
  std::vector<Pose> poses;
  bool converged = false;
  double simulated_time = 0.0;
};

/// Drops the blocks (no robot) until kinetic energy stays below the configured
/// threshold for the quiet window, or the time cap elapses. The seed perturbs
/// each block's initial heading by at most 1e-3 rad.
SettleResult settle_drop(std::span<const Cuboid> blocks, std::uint64_t seed,
                         const PhysicsConstants& physics = PhysicsConstants::builtin(),
                         const SettleOptions& options = {});

nlohmann::json to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Cuboid& c);
Cuboid cuboid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GoalShape& g);
GoalShape goal_from_json(const nlohmann::json& j);

}  // namespace blockbench
