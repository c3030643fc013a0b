#include "blockbench/env.hpp"
#include "blockbench/rng.hpp"

#include <gtest/gtest.h>

using namespace blockbench;

namespace {

RobotCommand still() {
  RobotCommand c;
  c.mode = ControlMode::delta_joint_position;
  return c;
}

Environment still_env() {
  EnvOptions o;
  o.action_mode = ControlMode::delta_joint_position;
  return Environment(o);
}

}  // namespace

TEST(Env, ObservationLengths) {
  Environment env;
  EXPECT_EQ(env.reset(build_task(Family::pushing), 0).size(), 55u);
  EXPECT_EQ(env.reset(build_task(Family::pick_and_place), 0).size(), 65u);
  EXPECT_EQ(observation_layout(1, 1, 1)["length"].get<int>(), 65);
}

TEST(Env, ObservationLengthForEveryFamilyAndCount) {
  Environment env;
  for (Family f : all_families()) {
    const TaskInstance t = build_task(f);
    const auto o = env.reset(t, 0);
    EXPECT_EQ(static_cast<int>(o.size()),
              observation_length(t.num_blocks(), static_cast<int>(t.goal.parts.size()),
                                 static_cast<int>(t.obstacles.size())));
  }
  for (int n = 1; n <= 8; ++n) {
    const TaskInstance t = build_task(Family::stacked_blocks, {{"num_blocks", {static_cast<double>(n)}}}, n);
    EXPECT_EQ(static_cast<int>(env.reset(t, 0).size()), observation_length(n, n, 0));
  }
}

TEST(Env, ResetIsDeterministic) {
  Environment a;
  Environment b;
  const TaskInstance t = build_task(Family::stacking2);
  EXPECT_EQ(a.reset(t, 3), b.reset(t, 3));
}

TEST(Env, EpisodeEndsAtTheTimeLimit) {
  Environment env = still_env();
  const TaskInstance t = build_task(Family::pushing);
  auto obs = env.reset(t, 0);
  const double f0 = env.fractional_success();
  double left = obs[0];
  StepResult r;
  for (int i = 0; i < 500; ++i) {
    ASSERT_FALSE(env.done());
    r = env.step(still());
    EXPECT_NEAR(left - r.observation[0], 1.0 / 500, 1e-12);
    left = r.observation[0];
    EXPECT_GE(r.info.fractional_success, 0.0);
    EXPECT_LE(r.info.fractional_success, 1.0);
  }
  EXPECT_TRUE(r.done);
  EXPECT_NEAR(r.info.fractional_success, f0, 1e-6);
  EXPECT_THROW(env.step(still()), LifecycleError);
}

TEST(Env, LifecycleAndActionErrors) {
  Environment env;
  EXPECT_THROW(env.step(RobotCommand{}), LifecycleError);
  env.reset(build_task(Family::pushing), 0);
  RobotCommand bad;
  bad.values.assign(8, 0.0);
  EXPECT_THROW(env.step(bad), ActionError);
  EXPECT_THROW(env.step(still()), ActionError);
}

TEST(Env, GoalInterventionUpdatesTheGoalSlice) {
  Environment env;
  const TaskInstance t = build_task(Family::pushing);
  const auto before = env.reset(t, 0);
  Intervention iv;
  iv.assignments["goal_0.pose_cyl"] = {0.06, 0.5, 0.0325, 0.2};
  const auto out = env.do_intervention(iv);
  ASSERT_TRUE(out.applied);
  const int goal_at = 28 + 17;
  EXPECT_NEAR(out.observation[goal_at], 0.06 * std::cos(0.5), 1e-15);
  for (int i = 0; i < goal_at; ++i) EXPECT_EQ(out.observation[i], before[i]);
}

TEST(Env, SuppressedInterventionLeavesWorldUntouched) {
  Environment env;
  const auto before = env.reset(build_task(Family::pushing), 0);
  Intervention iv;
  iv.assignments["goal_0.pose_cyl"] = {0.06, 0.5, 0.1, 0.0};
  const auto out = env.do_intervention(iv);
  EXPECT_FALSE(out.applied);
  ASSERT_TRUE(out.rejection.has_value());
  EXPECT_EQ(out.rejection->code, RejectCode::floor_level);
  EXPECT_EQ(out.observation, before);
  const auto empty = env.do_intervention({});
  EXPECT_TRUE(empty.applied);
  EXPECT_EQ(empty.observation, before);
}

TEST(Env, InterventionLocality) {
  Environment env = still_env();
  env.reset(build_task(Family::pushing), 0);
  for (int i = 0; i < 10; ++i) env.step(still());
  const auto before = env.observe();
  Intervention iv;
  iv.assignments["block_0.mass"] = {0.04};
  const auto out = env.do_intervention(iv);
  ASSERT_TRUE(out.applied);
  const int mass_at = 28 + 16;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (static_cast<int>(i) == mass_at) {
      EXPECT_EQ(out.observation[i], 0.04);
    } else {
      EXPECT_EQ(out.observation[i], before[i]) << i;
    }
  }
}

TEST(Env, SizeInterventionLiftsTheBlock) {
  Environment env;
  env.reset(build_task(Family::pushing), 0);
  Intervention iv;
  iv.assignments["block_0.size"] = {0.08, 0.08, 0.08};
  ASSERT_TRUE(env.do_intervention(iv).applied);
  EXPECT_NEAR(env.world().blocks[0].cuboid().lowest_z(), 0.001, 1e-9);
  EXPECT_EQ(env.task().goal.parts[0].size, Vec3::Constant(0.08));
}

TEST(Env, RewardSequenceReplaysBitwise) {
  std::vector<double> runs[2];
  for (auto& rewards : runs) {
    Environment env;
    const TaskInstance t = build_task(Family::picking);
    auto obs = env.reset(t, 9);
    Rng rng(4);
    for (int i = 0; i < 60; ++i) {
      RobotCommand c;
      for (int k = 0; k < 9; ++k) c.values[k] = obs[1 + k] + rng.uniform(-0.1, 0.1);
      const StepResult r = env.step(c);
      obs = r.observation;
      rewards.push_back(r.reward);
      if (i == 30) {
        Intervention iv;
        iv.assignments["floor_friction"] = {0.4};
        env.do_intervention(iv);
      }
    }
  }
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Env, ConfigOverridesAtReset) {
  Environment env;
  const TaskInstance t = build_task(Family::pushing);
  EnvConfig c = t.config;
  c.set("block_0.mass", {0.02});
  env.reset(t, c, 0);
  EXPECT_EQ(env.world().blocks[0].mass, 0.02);
  c.set("goal_0.pose_cyl", {0.05, 0.0, 0.2, 0.0});
  EXPECT_THROW(env.reset(t, c, 0), ConfigError);
}

TEST(Env, ParseObservationSplitsTheLayout) {
  Environment env;
  const TaskInstance t = build_task(Family::pick_and_place);
  const Observation o = env.reset(t, 0);
  const ObservationView v = parse_observation(o);
  ASSERT_EQ(v.blocks.size(), 1u);
  ASSERT_EQ(v.goal.size(), 1u);
  ASSERT_EQ(v.obstacles.size(), 1u);
  EXPECT_EQ(v.time_left_fraction, 1.0);
  EXPECT_EQ(v.fingertips[2], forward_kinematics(env.world().joint_positions)[2]);
  EXPECT_EQ(v.blocks[0].position, t.blocks[0].pose.position);
  EXPECT_EQ(v.blocks[0].mass, t.blocks[0].mass);
  EXPECT_EQ(v.goal[0].size, t.goal.parts[0].size);
  EXPECT_EQ(v.obstacles[0].position, t.obstacles[0].pose.position);
  EXPECT_THROW(parse_observation(o, 2, 2, 0), ActionError);
  EXPECT_THROW(parse_observation(Observation(30, 0.0)), ActionError);
  const TaskInstance s = build_task(Family::stacked_blocks, {{"num_blocks", {4.0}}}, 1);
  EXPECT_EQ(parse_observation(env.reset(s, 0)).blocks.size(), 4u);
}
