#include "blockbench/dynamics.hpp"
#include "contact.hpp"

#include <gtest/gtest.h>

using namespace blockbench;

namespace {

const PhysicsConstants& pc() { return PhysicsConstants::builtin(); }

JointVector default_joints() {
  JointVector q;
  q << -0.8, -1.15, -1.6, -0.8, -1.15, -1.6, -0.8, -1.15, -1.6;
  return q;
}

WorldState resting_block(double edge = 0.065, double mass = 0.03) {
  WorldState w;
  w.joint_positions = default_joints();
  BlockState b;
  b.size = Vec3::Constant(edge);
  b.mass = mass;
  b.pose.position = Vec3(0.05, -0.02, 0.5 * edge);
  w.blocks.push_back(b);
  return w;
}

RobotCommand hold(const WorldState& w) {
  RobotCommand c;
  c.values.assign(w.joint_positions.data(), w.joint_positions.data() + 9);
  return c;
}

}  // namespace

TEST(StepWorld, RestingBlockStaysPut) {
  WorldState w = resting_block();
  const Vec3 start = w.blocks[0].pose.position;
  const RobotCommand cmd = hold(w);
  for (int i = 0; i < 1000; ++i) w = step_world(w, cmd, pc().sim_dt);
  EXPECT_LT((w.blocks[0].pose.position - start).norm(), 1e-3);
  EXPECT_LT(max_block_penetration(w), pc().penetration_tolerance);
}

TEST(StepWorld, BallisticFall) {
  WorldState w;
  w.robot_enabled = false;
  BlockState b;
  b.pose.position = Vec3(0.0, 0.0, 10.0);
  w.blocks.push_back(b);
  const ResolvedCommand idle;
  for (int i = 1; i <= 250; ++i) {
    w = step_world(w, idle, pc().sim_dt);
    EXPECT_NEAR(w.blocks[0].linear_velocity.z(), -9.81 * i * pc().sim_dt, 1e-6);
  }
}

TEST(StepWorld, BitwiseDeterministic) {
  WorldState w = resting_block();
  w.blocks[0].linear_velocity = Vec3(0.1, 0.05, 0.0);
  w.blocks[0].angular_velocity = Vec3(0.0, 0.0, 2.0);
  RobotCommand cmd;
  cmd.mode = ControlMode::joint_torque;
  cmd.values = {0.1, -0.2, 0.05, 0.0, 0.1, 0.1, -0.1, 0.0, 0.2};
  WorldState a = w;
  WorldState b = w;
  for (int i = 0; i < 300; ++i) {
    a = step_world(a, cmd, pc().sim_dt);
    b = step_world(b, cmd, pc().sim_dt);
  }
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(world_from_json(to_json(a)) == a);
}

TEST(StepWorld, FingertipPushMovesBlockInPushDirection) {
  // Finger 0 sits on the +x side; put the block between it and the center and
  // drive the tip towards the center.
  WorldState w;
  w.joint_positions = default_joints();
  BlockState b;
  b.pose.position = Vec3(0.0, 0.0, 0.0325);
  w.blocks.push_back(b);
  const double x0 = b.pose.position.x();

  FingertipPositions tips = forward_kinematics(w.joint_positions);
  tips[0] = Vec3(0.06, 0.0, 0.03);
  JointVector q = inverse_kinematics(tips, w.joint_positions).joints;
  RobotCommand cmd;
  cmd.values.assign(q.data(), q.data() + 9);
  for (int i = 0; i < 250; ++i) w = step_world(w, cmd, pc().sim_dt);
  ASSERT_GT(forward_kinematics(w.joint_positions)[0].x(), 0.04);

  for (int s = 0; s < 40; ++s) {
    tips[0].x() -= 0.002;
    q = inverse_kinematics(tips, w.joint_positions).joints;
    cmd.values.assign(q.data(), q.data() + 9);
    for (int i = 0; i < 10; ++i) w = step_world(w, cmd, pc().sim_dt);
  }
  EXPECT_LT(w.blocks[0].pose.position.x(), x0 - 0.01);
  EXPECT_LT(max_block_penetration(w), pc().penetration_tolerance);
}

TEST(StepWorld, EnergyNonIncreasingWithoutCommands) {
  WorldState w;
  w.robot_enabled = false;
  for (int i = 0; i < 3; ++i) {
    BlockState b;
    b.pose.position = Vec3(-0.05 + 0.05 * i, 0.01 * i, 0.05 + 0.07 * i);
    b.pose.orientation = Quat(Eigen::AngleAxisd(0.3 * i, Vec3(1, 1, 0).normalized()));
    w.blocks.push_back(b);
  }
  double e = mechanical_energy(w);
  const ResolvedCommand idle;
  for (int i = 0; i < 500; ++i) {
    w = step_world(w, idle, pc().sim_dt);
    const double next = mechanical_energy(w);
    EXPECT_LE(next, e + 1e-4) << "step " << i;
    e = next;
  }
}

TEST(StepWorld, StackedBlocksRespectPenetrationBound) {
  WorldState w;
  w.robot_enabled = false;
  for (int i = 0; i < 4; ++i) {
    BlockState b;
    b.mass = 0.1;
    b.pose.position = Vec3(0.0, 0.0, 0.0325 + 0.065 * i + 0.001 * i);
    w.blocks.push_back(b);
  }
  const ResolvedCommand idle;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    w = step_world(w, idle, pc().sim_dt);
    worst = std::max(worst, max_block_penetration(w));
  }
  EXPECT_LT(worst, pc().penetration_tolerance);
  EXPECT_NEAR(w.blocks[3].pose.position.z(), 0.0325 + 3 * 0.065, 2e-3);
  EXPECT_LT(w.blocks[3].pose.position.head<2>().norm(), 1e-3);
}

TEST(StepWorld, MoreFrictionNeverSlidesFarther) {
  const ResolvedCommand idle;
  for (int seed = 0; seed < 10; ++seed) {
    double slid[2];
    for (int k = 0; k < 2; ++k) {
      WorldState w = resting_block();
      w.robot_enabled = false;
      w.floor_friction = (0.2 + 0.03 * seed) * (k + 1);
      w.blocks[0].pose.position = Vec3(-0.05, 0.0, 0.0325);
      w.blocks[0].linear_velocity = Vec3(0.3 + 0.02 * seed, 0.05, 0.0);
      const Vec3 start = w.blocks[0].pose.position;
      for (int i = 0; i < 250; ++i) w = step_world(w, idle, pc().sim_dt);
      slid[k] = (w.blocks[0].pose.position - start).head<2>().norm();
    }
    EXPECT_LE(slid[1], slid[0]) << "seed " << seed;
  }
}

TEST(StepWorld, StageWallContainsBlock) {
  WorldState w = resting_block();
  w.robot_enabled = false;
  w.blocks[0].pose.position = Vec3(0.1, 0.0, 0.0325);
  w.blocks[0].linear_velocity = Vec3(1.0, 0.0, 0.0);
  const ResolvedCommand idle;
  for (int i = 0; i < 500; ++i) w = step_world(w, idle, pc().sim_dt);
  for (const Vec3& c : w.blocks[0].cuboid().corners()) {
    EXPECT_LT(c.head<2>().norm(), pc().stage_radius + pc().penetration_tolerance);
  }
}

TEST(StepWorld, DivergenceNamesTheBody) {
  WorldState w = resting_block();
  w.blocks[0].linear_velocity = Vec3(std::nan(""), 0.0, 0.0);
  try {
    step_world(w, hold(w), pc().sim_dt);
    FAIL() << "expected divergence";
  } catch (const SimulationDiverged& e) {
    EXPECT_EQ(e.body_name, "block_0");
  }
}

TEST(ResolveCommand, RejectsWrongLengthAndNonFinite) {
  const WorldState w = resting_block();
  RobotCommand c;
  c.values = {0.0, 0.0};
  EXPECT_THROW(resolve_command(w, c), ActionError);
  c.values.assign(9, 0.0);
  c.values[4] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(resolve_command(w, c), ActionError);
}

TEST(ResolveCommand, DeltaModesAreRelative) {
  const WorldState w = resting_block();
  RobotCommand c;
  c.mode = ControlMode::delta_joint_position;
  c.values.assign(9, 0.01);
  const ResolvedCommand r = resolve_command(w, c);
  EXPECT_FALSE(r.torque);
  EXPECT_LT((r.values - (w.joint_positions + JointVector::Constant(0.01))).norm(), 1e-15);

  c.mode = ControlMode::delta_ee_position;
  c.values.assign(9, 0.0);
  const ResolvedCommand same = resolve_command(w, c);
  EXPECT_LT((same.values - w.joint_positions).norm(), 1e-12);
}

TEST(ResolveCommand, TorquesAreClamped) {
  const WorldState w = resting_block();
  RobotCommand c;
  c.mode = ControlMode::joint_torque;
  c.values.assign(9, 5.0);
  EXPECT_EQ(resolve_command(w, c).values.maxCoeff(), pc().torque_limit);
}

TEST(Contacts, FaceContactForStackedBoxes) {
  Cuboid bottom;
  bottom.pose.position = Vec3(0, 0, 0.0325);
  Cuboid top = bottom;
  top.pose.position.z() = 0.0325 + 0.065 - 0.001;
  std::vector<detail::ContactPoint> cps;
  detail::box_box_contacts(top, bottom, cps);
  ASSERT_EQ(cps.size(), 4u);
  for (const auto& c : cps) {
    EXPECT_NEAR(c.depth, 0.001, 1e-12);
    EXPECT_NEAR(c.normal.z(), 1.0, 1e-12);
  }
  EXPECT_NEAR(detail::box_box_depth(top, bottom), 0.001, 1e-12);
}
