#pragma once

// Fractional goal coverage, its binarization, and the hand-designed dense
// rewards of the pushing, picking, pick-and-place and stacking tasks.

#include "blockbench/dynamics.hpp"
#include "blockbench/tasks.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace blockbench {

/// What the dense rewards read from one control step.
struct RewardSnapshot {
  double time = 0.0;
  FingertipPositions fingertips{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  std::vector<Vec3> block_positions;
  JointVector joint_velocities = JointVector::Zero();

  bool operator==(const RewardSnapshot&) const = default;
};

RewardSnapshot snapshot_of(const WorldState& w, const PhysicsConstants& pc = PhysicsConstants::builtin());

struct RewardContext {
  Family family = Family::pushing;
  RewardSnapshot prev;
  RewardSnapshot curr;
  std::vector<Vec3> goal_positions;
  std::vector<double> block_heights;  // size along z
  std::vector<double> goal_heights;
};

RewardContext reward_context(const TaskInstance& task, const RewardSnapshot& prev, const RewardSnapshot& curr);

double fractional_success(const WorldState& state, const GoalShape& goal, double voxel_edge = 0.005);

/// 1 iff fraction >= threshold.
double sparse_reward(double fraction, double threshold = 0.9);

bool has_dense_reward(Family f);

/// Throws TaskError for families without a dense reward.
double dense_reward(const RewardContext& ctx);

enum class RewardType { dense, sparse, fractional };

std::string to_string(RewardType r);
RewardType reward_type_from_string(std::string_view s);

nlohmann::json to_json(const RewardSnapshot& s);
RewardSnapshot snapshot_from_json(const nlohmann::json& j);

}  // namespace blockbench
