#include "blockbench/scripted_policies.hpp"

#include "blockbench/rng.hpp"

#include <algorithm>
#include <cmath>

namespace blockbench {

namespace {

using Vec2 = Eigen::Vector2d;

constexpr double kTipSpeed = 0.12;    // m/s, commanded fingertip travel
constexpr double kPushSpeed = 0.05;
constexpr double kYawGain = 0.0;     // m of extra push depth per rad
constexpr double kLateralLimit = 0.012;  // m off the push line before re-approaching
constexpr double kJointSpeed = 2.0;   // rad/s, joint-space fallback
constexpr double kReached = 0.012;    // m
constexpr double kStopDistance = 0.01;
constexpr double kPushLead = 0.012;   // commanded depth past the contact face
constexpr double kPushSpread = 0.02; // half distance between the two pushers
constexpr double kClearance = 0.02;   // stand-off before contact

RobotCommand joint_command(const JointVector& q) {
  RobotCommand c;
  c.mode = ControlMode::joint_position;
  c.values.assign(q.data(), q.data() + 9);
  return c;
}

double yaw_from(const Quat& q) { return yaw_of(q.normalized()); }

/// Distance from the footprint center to its boundary along unit `dir`.
double ray_exit(const Vec3& size, double yaw, const Vec2& dir) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double lx = std::abs(c * dir.x() + s * dir.y());
  const double ly = std::abs(-s * dir.x() + c * dir.y());
  double t = 1e9;
  if (lx > 1e-12) t = std::min(t, 0.5 * size.x() / lx);
  if (ly > 1e-12) t = std::min(t, 0.5 * size.y() / ly);
  return t;
}

/// Half width of the footprint along unit `dir` (support function).
double support(const Vec3& size, double yaw, const Vec2& dir) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return 0.5 * size.x() * std::abs(c * dir.x() + s * dir.y()) + 0.5 * size.y() * std::abs(-s * dir.x() + c * dir.y());
}

Vec2 perp(const Vec2& d) { return Vec2(-d.y(), d.x()); }

Vec3 at_height(const Vec2& xy, double z) { return Vec3(xy.x(), xy.y(), z); }

/// Moves commanded tips towards `desired` at bounded speed and solves IK
/// seeded from the previous command. A finger whose incremental solve stalls
/// moves in joint space towards a full solve of its final target instead.
JointVector track(const FingertipPositions& desired, JointVector& last, const PhysicsConstants& pc,
                  double speed = kTipSpeed) {
  FingertipPositions cmd = forward_kinematics(last, pc);
  const double step = speed * pc.control_dt();
  for (int k = 0; k < 3; ++k) {
    const Vec3 d = desired[k] - cmd[k];
    const double n = d.norm();
    cmd[k] += n > step ? (d * (step / n)) : d;
  }
  JointVector q = inverse_kinematics(cmd, last, pc).joints;
  const FingertipPositions got = forward_kinematics(q, pc);
  std::optional<JointVector> full;
  for (int k = 0; k < 3; ++k) {
    if ((got[k] - cmd[k]).norm() < 2e-3) continue;
    if (!full) full = inverse_kinematics(desired, last, pc).joints;
    const Vec3 dq = full->segment<3>(3 * k) - last.segment<3>(3 * k);
    const double max_step = kJointSpeed * pc.control_dt();
    const double m = dq.cwiseAbs().maxCoeff();
    q.segment<3>(3 * k) = last.segment<3>(3 * k) + (m > max_step ? Vec3(dq * (max_step / m)) : dq);
  }
  last = q;
  return last;
}

bool reached(const FingertipPositions& tips, const FingertipPositions& want, std::initializer_list<int> which) {
  for (int k : which) {
    if ((tips[k] - want[k]).norm() > kReached) return false;
  }
  return true;
}

double worst_ik_error(int finger, const std::vector<Vec3>& points, const JointVector& seed) {
  double worst = 0.0;
  for (const Vec3& p : points) {
    FingertipPositions t = forward_kinematics(seed);
    t[finger] = p;
    const IkResult r = inverse_kinematics(t, seed);
    worst = std::max(worst, (forward_kinematics(r.joints)[finger] - p).norm());
  }
  return worst;
}

}  // namespace

RobotCommand NoopPolicy::act(const Observation& o) {
  const ObservationView v = parse_observation(o);
  if (!hold_) hold_ = v.joint_positions;
  return joint_command(*hold_);
}

void RandomPolicy::reset() {
  ++episode_;
  step_ = 0;
}

RobotCommand RandomPolicy::act(const Observation& o) {
  parse_observation(o);
  if (step_ % hold_steps_ == 0) {
    Rng rng(derive_seed(derive_seed(seed_, episode_), static_cast<std::uint64_t>(step_)));
    for (int i = 0; i < 9; ++i) target_[i] = rng.uniform(joint_lower_limits()[i], joint_upper_limits()[i]);
  }
  ++step_;
  return joint_command(target_);
}

void PushPolicy::reset() {
  phase_ = Phase::retreat;
  started_ = false;
  phase_steps_ = 0;
}

RobotCommand PushPolicy::act(const Observation& o) {
  const PhysicsConstants& pc = PhysicsConstants::builtin();
  const ObservationView v = parse_observation(o);
  if (!started_) {
    last_ = v.joint_positions;
    park_ = v.fingertips;
    started_ = true;
  }
  const auto& b = v.blocks.at(0);
  const auto& g = v.goal.at(0);
  const double yaw = yaw_from(b.orientation);
  const Vec2 bxy = b.position.head<2>();
  const Vec2 to_goal = g.position.head<2>() - bxy;
  const double dist = to_goal.norm();
  const double r = pc.fingertip_radius;
  const double top = b.position.z() + 0.5 * b.size.z();
  const double z_push = std::max(r + 0.004, 0.45 * b.size.z());
  const double r_clear = 0.5 * b.size.head<2>().norm() + r + 0.012;
  const auto& tips = v.fingertips;

  auto set_phase = [&](Phase p) {
    phase_ = p;
    phase_steps_ = 0;
  };
  ++phase_steps_;

  if (dist > 1e-9 && phase_ != Phase::push && phase_ != Phase::hold) direction_ = to_goal / dist;
  const Vec2 d = direction_;

  // Stand-off spots behind the block on the line through the goal along the
  // push direction; `back` < 0 reaches past the face.
  const Vec2 gxy = g.position.head<2>();
  auto rear = [&](int slot, double back) {
    const double s = support(b.size, yaw, d) + r + back;
    const double along = (bxy - gxy).dot(d);
    return Vec2(gxy + (along - s) * d + (slot == 0 ? 1.0 : -1.0) * kPushSpread * perp(d));
  };
  auto angle_about_block = [&](const Vec2& p) {
    const Vec2 rel = p - bxy;
    return std::atan2(rel.y(), rel.x());
  };

  if (phase_ == Phase::retreat && phase_steps_ == 1) {
    if (dist <= kStopDistance) {
      set_phase(Phase::hold);
      hold_ = tips;
    } else {
      // Choose the two fingers that best reach the push line, then give each
      // the rear spot on its own side.
      double best = 1e9;
      for (int a = 0; a < 3; ++a) {
        for (int c = a + 1; c < 3; ++c) {
          for (int swap = 0; swap < 2; ++swap) {
            const int fa = swap ? c : a;
            const int fc = swap ? a : c;
            const Vec2 goal_shift = to_goal - support(b.size, yaw, d) * 0.0 * d;
            const double reach = std::max(
                worst_ik_error(fa, {at_height(rear(0, kClearance), z_push), at_height(rear(0, 0.0) + goal_shift, z_push)},
                               last_),
                worst_ik_error(fc, {at_height(rear(1, kClearance), z_push), at_height(rear(1, 0.0) + goal_shift, z_push)},
                               last_));
            const double travel = std::abs(wrap_angle(angle_about_block(tips[fa].head<2>()) -
                                                      angle_about_block(rear(0, kClearance)))) +
                                  std::abs(wrap_angle(angle_about_block(tips[fc].head<2>()) -
                                                      angle_about_block(rear(1, kClearance))));
            const double cost = (reach > 2e-3 ? 10.0 + reach : 0.0) + 0.01 * travel;
            if (cost < best - 1e-9) {
              best = cost;
              pushers_ = {fa, fc};
            }
          }
        }
      }
    }
  }
  const int p0 = pushers_[0];
  const int p1 = pushers_[1];
  const int parked = 3 - p0 - p1;

  FingertipPositions want = tips;
  want[parked] = park_[parked];
  want[parked].z() = std::max(park_[parked].z(), top + r + 0.03);
  double speed = kTipSpeed;

  switch (phase_) {
    case Phase::retreat:
    case Phase::lower: {
      for (int k : {p0, p1}) {
        const Vec2 rel = tips[k].head<2>() - bxy;
        const double n = rel.norm();
        const Vec2 u = n > 1e-9 ? Vec2(rel / n) : Vec2(-d);
        const Vec2 xy = bxy + std::max(n, r_clear) * u;
        const double z = phase_ == Phase::retreat ? std::max(tips[k].z(), z_push) : z_push;
        want[k] = at_height(xy, z);
      }
      if (reached(tips, want, {p0, p1}) || phase_steps_ > 80) {
        set_phase(phase_ == Phase::retreat ? Phase::lower : Phase::orbit);
      }
      break;
    }
    case Phase::orbit: {
      bool arrived = true;
      for (int slot = 0; slot < 2; ++slot) {
        const int k = pushers_[slot];
        const double now = angle_about_block(tips[k].head<2>());
        const double delta = wrap_angle(angle_about_block(rear(slot, kClearance)) - now);
        const double next = now + std::clamp(delta, -0.3, 0.3);
        want[k] = at_height(bxy + r_clear * Vec2(std::cos(next), std::sin(next)), z_push);
        arrived = arrived && std::abs(delta) < 0.15;
      }
      if (arrived || phase_steps_ > 150) set_phase(Phase::approach);
      break;
    }
    case Phase::approach:
      want[p0] = at_height(rear(0, kClearance), z_push);
      want[p1] = at_height(rear(1, kClearance), z_push);
      if (reached(tips, want, {p0, p1}) || phase_steps_ > 80) set_phase(Phase::push);
      break;
    case Phase::push: {
      if (dist <= kStopDistance) {
        set_phase(Phase::hold);
        hold_ = tips;
        want = hold_;
        break;
      }
      const Vec2 mid = 0.5 * (tips[p0].head<2>() + tips[p1].head<2>());
      const double lateral = std::abs((bxy - gxy).dot(perp(d)));
      const double gap = (bxy - mid).dot(d) - support(b.size, yaw, d) - r;
      if (lateral > kLateralLimit || gap > 0.04 || (bxy - gxy).dot(d) > kStopDistance) {
        set_phase(Phase::retreat);
        break;
      }
      // Turn the block towards the goal heading (quarter-turn symmetric) by
      // pushing one side deeper; the left pusher turns it clockwise.
      const double quarter = 0.5 * kPi;
      double yaw_err = std::remainder(yaw - yaw_from(g.orientation), quarter);
      const double turn = std::clamp(kYawGain * yaw_err, -kPushLead, kPushLead);
      const double lead = std::min(kPushLead, dist);
      want[p0] = at_height(rear(0, -lead - turn), z_push);
      want[p1] = at_height(rear(1, -lead + turn), z_push);
      speed = kPushSpeed;
      break;
    }
    case Phase::hold:
      want = hold_;
      if (dist > 2.0 * kStopDistance) set_phase(Phase::retreat);
      break;
  }
  return joint_command(track(want, last_, pc, speed));
}

void PickPolicy::reset() {
  phase_ = Phase::lift;
  started_ = false;
  phase_steps_ = 0;
}

RobotCommand PickPolicy::act(const Observation& o) {
  const PhysicsConstants& pc = PhysicsConstants::builtin();
  const ObservationView v = parse_observation(o);
  if (!started_) {
    last_ = v.joint_positions;
    started_ = true;
  }
  const auto& b = v.blocks.at(0);
  const auto& g = v.goal.at(0);
  const double yaw = yaw_from(b.orientation);
  const double r = pc.fingertip_radius;
  const double z_safe = b.position.z() + 0.5 * b.size.z() + r + 0.03;
  const auto& tips = v.fingertips;
  ++phase_steps_;
  auto set_phase = [&](Phase p) {
    phase_ = p;
    phase_steps_ = 0;
  };

  // Tip k on the ray from the center towards its own finger's mount.
  auto ring = [&](const Vec3& center, double offset, double z_shift) {
    FingertipPositions want;
    for (int k = 0; k < 3; ++k) {
      const double a = 2.0 * kPi * k / 3.0;
      const Vec2 dir(std::cos(a), std::sin(a));
      const double s = ray_exit(b.size, yaw, dir) + r + offset;
      want[k] = at_height(center.head<2>() + s * dir, center.z() + z_shift);
    }
    return want;
  };
  const Vec3 grasp_center(b.position.x(), b.position.y(), b.position.z());

  FingertipPositions want = tips;
  switch (phase_) {
    case Phase::lift:
      for (int k = 0; k < 3; ++k) want[k].z() = std::max(tips[k].z(), z_safe);
      if (reached(tips, want, {0, 1, 2}) || phase_steps_ > 60) set_phase(Phase::approach);
      break;
    case Phase::approach:
      want = ring(grasp_center, kClearance, z_safe - b.position.z());
      if (reached(tips, want, {0, 1, 2}) || phase_steps_ > 100) set_phase(Phase::descend);
      break;
    case Phase::descend:
      want = ring(grasp_center, kClearance, 0.0);
      if (reached(tips, want, {0, 1, 2}) || phase_steps_ > 60) set_phase(Phase::grasp);
      break;
    case Phase::grasp:
      want = ring(grasp_center, -0.012, 0.0);
      if (phase_steps_ > 25) set_phase(Phase::carry);
      break;
    case Phase::carry:
    case Phase::hold: {
      const Vec3 target = g.position;
      Vec3 center = grasp_center;
      // Lift first, then travel, so the block clears the floor.
      const Vec3 err = target - center;
      Vec3 aim = target;
      if (err.head<2>().norm() > 0.01 && center.z() < target.z() - 0.005) aim = Vec3(center.x(), center.y(), target.z());
      want = ring(aim, -0.012, 0.0);
      if (phase_ == Phase::carry && err.norm() < kStopDistance) set_phase(Phase::hold);
      // Dropped: start over.
      const double spread = (tips[0] - b.position).norm() + (tips[1] - b.position).norm() +
                            (tips[2] - b.position).norm();
      if (spread > 3.0 * (0.5 * b.size.maxCoeff() + r) + 0.06) set_phase(Phase::lift);
      break;
    }
  }
  return joint_command(track(want, last_, pc));
}

std::vector<std::string> policy_names() { return {"noop", "random", "push", "pick"}; }

std::unique_ptr<Policy> make_policy(std::string_view name, std::uint64_t seed) {
  if (name == "noop") return std::make_unique<NoopPolicy>();
  if (name == "random") return std::make_unique<RandomPolicy>(seed);
  if (name == "push") return std::make_unique<PushPolicy>();
  if (name == "pick") return std::make_unique<PickPolicy>();
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

}  // namespace blockbench
