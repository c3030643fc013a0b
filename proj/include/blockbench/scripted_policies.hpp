#pragma once

// Hand-coded controllers: hold, random joint targets, push-to-goal and
// pick-to-height. All emit joint_position commands.

#include "blockbench/env.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace blockbench {

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  /// Clears internal state; call at every episode start.
  virtual void reset() = 0;
  /// Always returns nine finite joint-position targets.
  virtual RobotCommand act(const Observation& o) = 0;
};

/// Holds the joint positions seen at the first step of the episode.
class NoopPolicy : public Policy {
 public:
  std::string name() const override { return "noop"; }
  void reset() override { hold_.reset(); }
  RobotCommand act(const Observation& o) override;

 private:
  std::optional<JointVector> hold_;
};

/// Uniform joint targets inside the joint limits, redrawn every `hold_steps`.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed = 0, int hold_steps = 10) : seed_(seed), hold_steps_(hold_steps) {}
  std::string name() const override { return "random"; }
  void reset() override;
  RobotCommand act(const Observation& o) override;

 private:
  std::uint64_t seed_;
  int hold_steps_;
  std::uint64_t episode_ = 0;
  int step_ = 0;
  JointVector target_ = JointVector::Zero();
};

/// Pushes block 0 towards goal part 0 with two fingertips; the third finger
/// stays parked. Stops within 0.01 m of the goal and holds the fingertips
/// where they are.
class PushPolicy : public Policy {
 public:
  enum class Phase { retreat, lower, orbit, approach, push, hold };

  std::string name() const override { return "push"; }
  void reset() override;
  RobotCommand act(const Observation& o) override;
  Phase phase() const { return phase_; }

 private:
  Phase phase_ = Phase::retreat;
  std::array<int, 2> pushers_{0, 1};
  FingertipPositions park_;
  FingertipPositions hold_;  // tips frozen on entering hold
  Eigen::Vector2d direction_ = Eigen::Vector2d::UnitX();
  JointVector last_ = JointVector::Zero();
  bool started_ = false;
  int phase_steps_ = 0;
};

/// Grasps block 0 with all three fingertips and carries it to goal part 0.
class PickPolicy : public Policy {
 public:
  enum class Phase { lift, approach, descend, grasp, carry, hold };

  std::string name() const override { return "pick"; }
  void reset() override;
  RobotCommand act(const Observation& o) override;
  Phase phase() const { return phase_; }

 private:
  Phase phase_ = Phase::lift;
  JointVector last_ = JointVector::Zero();
  bool started_ = false;
  int phase_steps_ = 0;
};

/// Names accepted by make_policy.
std::vector<std::string> policy_names();
/// Throws ConfigError for unknown names. `seed` feeds the random policy.
std::unique_ptr<Policy> make_policy(std::string_view name, std::uint64_t seed = 0);

}  // namespace blockbench
