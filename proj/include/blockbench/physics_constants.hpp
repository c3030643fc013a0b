#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <string>

namespace blockbench {

/// Every tunable of the simulated world lives here; none of them come from a
/// published reference, so they are shipped as a versioned document
/// (data/physics.json) and may be overridden per run.
struct PhysicsConstants {
  std::string version = "1.0.0";

  double sim_dt = 1.0 / 250.0;  // s, one simulation step
  int substeps = 40;            // internal integration slices per simulation step
  int control_every = 5;        // simulation steps per control step

  double contact_stiffness = 1.0e4;  // N/m, per contact point
  double contact_damping = 50.0;     // N·s/m, per contact manifold
  double friction_damping = 50.0;    // N·s/m, tangential regularization per manifold
  double block_friction = 0.5;
  double fingertip_friction = 0.8;

  double fingertip_radius = 0.016;
  std::array<double, 3> link_lengths{0.16, 0.16, 0.08};
  double finger_base_height = 0.29;
  double finger_base_radius = 0.15;

  double torque_limit = 0.36;  // N·m
  double position_gain = 3.0;  // N·m/rad
  double velocity_gain = 0.2;  // N·m·s/rad
  double joint_damping = 0.01;
  double rotor_inertia = 0.003;  // kg·m²

  double stage_radius = 0.195;
  double penetration_tolerance = 2.0e-3;

  double settle_energy_threshold = 1.0e-6;  // J
  double settle_quiet_time = 0.5;           // s
  double settle_time_cap = 30.0;            // s

  double voxel_edge = 0.005;
  double sparse_threshold = 0.9;

  double control_dt() const { return sim_dt * control_every; }
  int control_rate_hz() const;

  static PhysicsConstants from_json(const nlohmann::json& j);
  static PhysicsConstants load(const std::filesystem::path& path);
  /// data/physics.json, compiled in.
  static const PhysicsConstants& builtin();
  nlohmann::json to_json() const;
};

}  // namespace blockbench
