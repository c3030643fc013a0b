#include "blockbench/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blockbench {

namespace {

struct FingerFrame {
  Vec3 u;  // radial, outward
  Vec3 t;  // tangent
  Vec3 z;
};

FingerFrame frame_of(int finger) {
  const double a = 2.0 * kPi * finger / 3.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {Vec3(c, s, 0.0), Vec3(-s, c, 0.0), Vec3::UnitZ()};
}

struct Chain {
  Vec3 base;
  Vec3 elbow;  // after link 0
  Vec3 wrist;  // after link 1
  Vec3 tip;
  Vec3 radial;
  Vec3 flex_axis;
};

Chain chain(const JointVector& q, int finger, const PhysicsConstants& pc) {
  const FingerFrame f = frame_of(finger);
  const double q0 = q[3 * finger] + upper_joint_mount_angle();
  const double q1 = q[3 * finger + 1];
  const double q2 = q[3 * finger + 2];
  const auto& len = pc.link_lengths;

  Chain c;
  c.radial = f.u;
  c.base = pc.finger_base_radius * f.u + pc.finger_base_height * f.z;
  const Vec3 d0 = std::cos(q0) * f.t + std::sin(q0) * f.z;
  c.flex_axis = d0.cross(f.u);
  const Vec3 d1 = std::cos(q1) * d0 + std::sin(q1) * f.u;
  const Vec3 d2 = std::cos(q1 + q2) * d0 + std::sin(q1 + q2) * f.u;
  c.elbow = c.base + len[0] * d0;
  c.wrist = c.elbow + len[1] * d1;
  c.tip = c.wrist + len[2] * d2;
  return c;
}

JointVector make_limits(bool upper) {
  JointVector v;
  for (int k = 0; k < 3; ++k) {
    if (upper) {
      v.segment<3>(3 * k) << 1.0, 1.57, 3.0;
    } else {
      v.segment<3>(3 * k) << -1.57, -1.2, -3.0;
    }
  }
  return v;
}

}  // namespace

const JointVector& joint_lower_limits() {
  static const JointVector v = make_limits(false);
  return v;
}

const JointVector& joint_upper_limits() {
  static const JointVector v = make_limits(true);
  return v;
}

double upper_joint_mount_angle() {
  return -0.5 * kPi - 0.5 * (joint_lower_limits()[0] + joint_upper_limits()[0]);
}

FingerMount finger_mount(int finger, const PhysicsConstants& pc) {
  const FingerFrame f = frame_of(finger);
  return {f.u, pc.finger_base_radius * f.u + pc.finger_base_height * f.z};
}

FingertipPositions forward_kinematics(const JointVector& q, const PhysicsConstants& pc) {
  FingertipPositions out;
  for (int k = 0; k < 3; ++k) out[k] = chain(q, k, pc).tip;
  return out;
}

Mat3 finger_jacobian(const JointVector& q, int finger, const PhysicsConstants& pc) {
  const Chain c = chain(q, finger, pc);
  Mat3 j;
  j.col(0) = c.radial.cross(c.tip - c.base);
  j.col(1) = c.flex_axis.cross(c.tip - c.elbow);
  j.col(2) = c.flex_axis.cross(c.tip - c.wrist);
  return j;
}

namespace {

// One finger, damped least squares with clamping. Returns the final error.
double solve_finger(JointVector& q, int finger, const Vec3& target, const PhysicsConstants& pc,
                    const IkOptions& opt) {
  const JointVector& lo = joint_lower_limits();
  const JointVector& hi = joint_upper_limits();
  double err = (forward_kinematics(q, pc)[finger] - target).norm();
  const double lambda2 = opt.damping * opt.damping;
  for (int it = 0; it < opt.max_iterations && err > opt.tolerance; ++it) {
    const Vec3 e = target - chain(q, finger, pc).tip;
    const Mat3 j = finger_jacobian(q, finger, pc);
    const Mat3 jjt = j * j.transpose() + lambda2 * Mat3::Identity();
    Vec3 dq = j.transpose() * jjt.ldlt().solve(e);
    const double n = dq.norm();
    if (n > 0.5) dq *= 0.5 / n;
    for (int i = 0; i < 3; ++i) {
      const int idx = 3 * finger + i;
      q[idx] = std::clamp(q[idx] + dq[i], lo[idx], hi[idx]);
    }
    err = (chain(q, finger, pc).tip - target).norm();
  }
  return err;
}

}  // namespace

IkResult inverse_kinematics(const FingertipPositions& targets, const JointVector& seed,
                            const PhysicsConstants& pc, const IkOptions& options) {
  IkResult r;
  r.joints = seed.cwiseMax(joint_lower_limits()).cwiseMin(joint_upper_limits());
  // Deterministic restarts for fingers that stall at a limit or singularity.
  static const double kRestarts[][3] = {{-0.8, -1.15, -1.6}, {0.0, 0.6, -1.8}, {-1.2, 0.9, 1.5},
                                        {-0.4, -0.6, -2.4}};
  for (int k = 0; k < 3; ++k) {
    if (!targets[k].allFinite()) {
      r.max_error = std::numeric_limits<double>::infinity();
      continue;
    }
    JointVector best = r.joints;
    double best_err = solve_finger(best, k, targets[k], pc, options);
    for (const auto& start : kRestarts) {
      if (best_err <= options.tolerance) break;
      JointVector q = r.joints;
      for (int i = 0; i < 3; ++i) q[3 * k + i] = start[i];
      const double e = solve_finger(q, k, targets[k], pc, options);
      if (e < best_err) {
        best_err = e;
        best = q;
      }
    }
    r.joints.segment<3>(3 * k) = best.segment<3>(3 * k);
    r.max_error = std::max(r.max_error, best_err);
  }
  r.reachable = r.max_error <= options.tolerance;
  return r;
}

}  // namespace blockbench
