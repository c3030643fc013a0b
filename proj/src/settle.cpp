#include "blockbench/dynamics.hpp"
#include "blockbench/geometry.hpp"
#include "blockbench/rng.hpp"

namespace blockbench {

SettleResult settle_drop(std::span<const Cuboid> blocks, std::uint64_t seed,
                         const PhysicsConstants& physics, const SettleOptions& options) {
  WorldState world;
  world.robot_enabled = false;
  world.gravity_z = options.gravity_z;
  world.floor_friction = options.floor_friction;
  world.stage_friction = options.stage_friction;
  Rng rng(derive_seed(seed, 0x5e77));
  for (const Cuboid& c : blocks) {
    BlockState b;
    b.pose = c.pose;
    const double jitter = rng.uniform(-1e-3, 1e-3);
    b.pose.orientation =
        (Quat(Eigen::AngleAxisd(jitter, Vec3::UnitZ())) * b.pose.orientation).normalized();
    b.size = c.size;
    b.mass = c.mass > 0.0 ? c.mass : 0.03;
    b.color = c.color;
    world.blocks.push_back(b);
  }

  SettleResult result;
  const ResolvedCommand idle;
  const double dt = physics.sim_dt;
  double quiet = 0.0;
  while (world.time < physics.settle_time_cap) {
    world = step_world(world, idle, dt, physics);
    if (kinetic_energy(world, physics) < physics.settle_energy_threshold) {
      quiet += dt;
      if (quiet >= physics.settle_quiet_time) {
        result.converged = true;
        break;
      }
    } else {
      quiet = 0.0;
    }
  }
  result.simulated_time = world.time;
  for (const BlockState& b : world.blocks) result.poses.push_back(b.pose);
  return result;
}

}  // namespace blockbench
