#pragma once

// Simplified deterministic rigid-body world: box blocks, a floor, a stage
// boundary cylinder, static obstacles, and a three-finger robot whose
// fingertips are spheres. Contacts are penalty springs with Coulomb-clamped
// viscous friction, integrated with semi-implicit Euler.

#include "blockbench/geometry.hpp"
#include "blockbench/physics_constants.hpp"
#include "blockbench/types.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace blockbench {

using JointVector = Eigen::Matrix<double, 9, 1>;
using FingertipPositions = std::array<Vec3, 3>;

enum class ControlMode {
  joint_position,
  joint_torque,
  ee_position,
  delta_joint_position,
  delta_joint_torque,
  delta_ee_position
};

std::string to_string(ControlMode m);
ControlMode control_mode_from_string(std::string_view s);

struct RobotCommand {
  ControlMode mode = ControlMode::joint_position;
  std::vector<double> values = std::vector<double>(9, 0.0);
};

struct BlockState {
  Pose pose;
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.065);
  double mass = 0.03;
  Vec3 color = Vec3::Zero();

  Cuboid cuboid() const { return {pose, size, mass, color}; }
};

struct WorldState {
  double time = 0.0;
  JointVector joint_positions = JointVector::Zero();
  JointVector joint_velocities = JointVector::Zero();
  JointVector applied_torques = JointVector::Zero();  // last commanded, after clamping
  std::vector<BlockState> blocks;
  std::vector<Cuboid> obstacles;  // static
  double gravity_z = -9.81;
  double floor_friction = 0.5;
  double stage_friction = 0.5;
  JointVector link_masses = JointVector::Constant(0.03);
  bool robot_enabled = true;

  bool operator==(const WorldState& o) const;
};

// ---- kinematics -----------------------------------------------------------

/// Fixed mounting of one finger: radial unit vector and base point.
struct FingerMount {
  Vec3 radial;
  Vec3 base;
};

FingerMount finger_mount(int finger, const PhysicsConstants& pc);

/// Fixed angle added to the upper joint: mid-range points the upper link
/// straight down.
double upper_joint_mount_angle();

/// Fingertip centers. Each finger is a 3R chain: an upper joint rolling about
/// the finger's radial axis, then two parallel flexion joints, so the lower
/// two links move in a plane swung by the upper joint.
FingertipPositions forward_kinematics(const JointVector& q,
                                      const PhysicsConstants& pc = PhysicsConstants::builtin());

/// d(tip of `finger`)/d(its three joints).
Mat3 finger_jacobian(const JointVector& q, int finger,
                     const PhysicsConstants& pc = PhysicsConstants::builtin());

struct IkOptions {
  double tolerance = 1e-4;
  double damping = 1e-3;
  int max_iterations = 200;
};

struct IkResult {
  JointVector joints = JointVector::Zero();
  bool reachable = false;
  double max_error = 0.0;  // m, worst fingertip
};

/// Damped least squares from `seed`, joints clamped to the physical range.
IkResult inverse_kinematics(const FingertipPositions& targets, const JointVector& seed,
                            const PhysicsConstants& pc = PhysicsConstants::builtin(),
                            const IkOptions& options = {});

/// Lower/upper joint limits per joint (physical range of the catalog).
const JointVector& joint_lower_limits();
const JointVector& joint_upper_limits();

// ---- stepping -------------------------------------------------------------

/// Absolute low-level command: PD position targets or raw torques.
struct ResolvedCommand {
  bool torque = false;
  JointVector values = JointVector::Zero();
};

/// Maps any control mode to an absolute command; delta modes are relative to
/// `state`. Throws ActionError when `cmd` does not carry 9 finite values.
ResolvedCommand resolve_command(const WorldState& state, const RobotCommand& cmd,
                                const PhysicsConstants& pc = PhysicsConstants::builtin());

/// Advances one simulation step of length dt. Pure: identical inputs give
/// bit-identical outputs. Throws SimulationDiverged on NaN/Inf.
WorldState step_world(const WorldState& state, const RobotCommand& cmd, double dt,
                      const PhysicsConstants& pc = PhysicsConstants::builtin());
WorldState step_world(const WorldState& state, const ResolvedCommand& cmd, double dt,
                      const PhysicsConstants& pc = PhysicsConstants::builtin());

/// Per-joint inertia used by the robot model (link masses scale it).
JointVector joint_inertia(const WorldState& state, const PhysicsConstants& pc);

double kinetic_energy(const WorldState& state, const PhysicsConstants& pc = PhysicsConstants::builtin());
/// Kinetic + gravitational (blocks) + stored contact-spring energy.
double mechanical_energy(const WorldState& state,
                         const PhysicsConstants& pc = PhysicsConstants::builtin());

/// Deepest penetration of any block into the floor, another block, or an obstacle.
double max_block_penetration(const WorldState& state);

nlohmann::json to_json(const WorldState& s);
WorldState world_from_json(const nlohmann::json& j);

}  // namespace blockbench
