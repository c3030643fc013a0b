#include "blockbench/physics_constants.hpp"

#include "blockbench/types.hpp"

#include <cmath>
#include <fstream>

namespace blockbench {

extern const char* const kBuiltinPhysicsJson;

int PhysicsConstants::control_rate_hz() const {
  return static_cast<int>(std::lround(1.0 / control_dt()));
}

PhysicsConstants PhysicsConstants::from_json(const nlohmann::json& j) {
  PhysicsConstants c;
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("version", c.version);
  read("sim_dt", c.sim_dt);
  read("substeps", c.substeps);
  read("control_every", c.control_every);
  read("contact_stiffness", c.contact_stiffness);
  read("contact_damping", c.contact_damping);
  read("friction_damping", c.friction_damping);
  read("block_friction", c.block_friction);
  read("fingertip_friction", c.fingertip_friction);
  read("fingertip_radius", c.fingertip_radius);
  read("link_lengths", c.link_lengths);
  read("finger_base_height", c.finger_base_height);
  read("finger_base_radius", c.finger_base_radius);
  read("torque_limit", c.torque_limit);
  read("position_gain", c.position_gain);
  read("velocity_gain", c.velocity_gain);
  read("joint_damping", c.joint_damping);
  read("rotor_inertia", c.rotor_inertia);
  read("stage_radius", c.stage_radius);
  read("penetration_tolerance", c.penetration_tolerance);
  read("settle_energy_threshold", c.settle_energy_threshold);
  read("settle_quiet_time", c.settle_quiet_time);
  read("settle_time_cap", c.settle_time_cap);
  read("voxel_edge", c.voxel_edge);
  read("sparse_threshold", c.sparse_threshold);
  if (!(c.sim_dt > 0.0) || c.substeps < 1 || c.control_every < 1) {
    throw ConfigError("physics constants: sim_dt, substeps and control_every must be positive");
  }
  if (!(c.voxel_edge > 0.0)) throw ConfigError("physics constants: voxel_edge must be positive");
  return c;
}

PhysicsConstants PhysicsConstants::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open physics constants " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("physics constants " + path.string() + ": " + e.what());
  }
}

const PhysicsConstants& PhysicsConstants::builtin() {
  static const PhysicsConstants c = from_json(nlohmann::json::parse(kBuiltinPhysicsJson));
  return c;
}

nlohmann::json PhysicsConstants::to_json() const {
  return {{"version", version},
          {"sim_dt", sim_dt},
          {"substeps", substeps},
          {"control_every", control_every},
          {"contact_stiffness", contact_stiffness},
          {"contact_damping", contact_damping},
          {"friction_damping", friction_damping},
          {"block_friction", block_friction},
          {"fingertip_friction", fingertip_friction},
          {"fingertip_radius", fingertip_radius},
          {"link_lengths", link_lengths},
          {"finger_base_height", finger_base_height},
          {"finger_base_radius", finger_base_radius},
          {"torque_limit", torque_limit},
          {"position_gain", position_gain},
          {"velocity_gain", velocity_gain},
          {"joint_damping", joint_damping},
          {"rotor_inertia", rotor_inertia},
          {"stage_radius", stage_radius},
          {"penetration_tolerance", penetration_tolerance},
          {"settle_energy_threshold", settle_energy_threshold},
          {"settle_quiet_time", settle_quiet_time},
          {"settle_time_cap", settle_time_cap},
          {"voxel_edge", voxel_edge},
          {"sparse_threshold", sparse_threshold}};
}

}  // namespace blockbench
