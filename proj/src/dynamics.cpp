#include "blockbench/dynamics.hpp"

#include "contact.hpp"

#include <algorithm>
#include <cmath>

namespace blockbench {

using detail::ContactPoint;

std::string to_string(ControlMode m) {
  switch (m) {
    case ControlMode::joint_position: return "joint_position";
    case ControlMode::joint_torque: return "joint_torque";
    case ControlMode::ee_position: return "ee_position";
    case ControlMode::delta_joint_position: return "delta_joint_position";
    case ControlMode::delta_joint_torque: return "delta_joint_torque";
    case ControlMode::delta_ee_position: return "delta_ee_position";
  }
  return "joint_position";
}

ControlMode control_mode_from_string(std::string_view s) {
  for (ControlMode m : {ControlMode::joint_position, ControlMode::joint_torque,
                        ControlMode::ee_position, ControlMode::delta_joint_position,
                        ControlMode::delta_joint_torque, ControlMode::delta_ee_position}) {
    if (to_string(m) == s) return m;
  }
  throw ActionError("unknown control mode '" + std::string(s) + "'");
}

bool WorldState::operator==(const WorldState& o) const {
  if (time != o.time || joint_positions != o.joint_positions ||
      joint_velocities != o.joint_velocities || applied_torques != o.applied_torques ||
      gravity_z != o.gravity_z || floor_friction != o.floor_friction ||
      stage_friction != o.stage_friction || link_masses != o.link_masses ||
      robot_enabled != o.robot_enabled || blocks.size() != o.blocks.size() ||
      obstacles.size() != o.obstacles.size()) {
    return false;
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockState& a = blocks[i];
    const BlockState& b = o.blocks[i];
    if (a.pose.position != b.pose.position || a.pose.orientation.coeffs() != b.pose.orientation.coeffs() ||
        a.linear_velocity != b.linear_velocity || a.angular_velocity != b.angular_velocity ||
        a.size != b.size || a.mass != b.mass || a.color != b.color) {
      return false;
    }
  }
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const Cuboid& a = obstacles[i];
    const Cuboid& b = o.obstacles[i];
    if (a.pose.position != b.pose.position || a.pose.orientation.coeffs() != b.pose.orientation.coeffs() ||
        a.size != b.size) {
      return false;
    }
  }
  return true;
}

JointVector joint_inertia(const WorldState& state, const PhysicsConstants& pc) {
  const auto& len = pc.link_lengths;
  JointVector inertia;
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) {
      double sum = pc.rotor_inertia;
      double reach = 0.0;
      for (int l = j; l < 3; ++l) {
        const double mid = reach + 0.5 * len[l];
        sum += state.link_masses[3 * k + l] * mid * mid;
        reach += len[l];
      }
      inertia[3 * k + j] = sum;
    }
  }
  return inertia;
}

ResolvedCommand resolve_command(const WorldState& state, const RobotCommand& cmd,
                                const PhysicsConstants& pc) {
  if (cmd.values.size() != 9) {
    throw ActionError("action must have 9 values, got " + std::to_string(cmd.values.size()));
  }
  JointVector v;
  for (int i = 0; i < 9; ++i) {
    if (!std::isfinite(cmd.values[i])) throw ActionError("action value " + std::to_string(i) + " is not finite");
    v[i] = cmd.values[i];
  }
  const JointVector& lo = joint_lower_limits();
  const JointVector& hi = joint_upper_limits();
  ResolvedCommand r;
  auto ik_targets = [&](const FingertipPositions& targets) {
    return inverse_kinematics(targets, state.joint_positions, pc).joints;
  };
  switch (cmd.mode) {
    case ControlMode::joint_position:
      r.values = v.cwiseMax(lo).cwiseMin(hi);
      break;
    case ControlMode::delta_joint_position:
      r.values = (state.joint_positions + v).cwiseMax(lo).cwiseMin(hi);
      break;
    case ControlMode::joint_torque:
      r.torque = true;
      r.values = v;
      break;
    case ControlMode::delta_joint_torque:
      r.torque = true;
      r.values = state.applied_torques + v;
      break;
    case ControlMode::ee_position: {
      FingertipPositions t;
      for (int k = 0; k < 3; ++k) t[k] = v.segment<3>(3 * k);
      r.values = ik_targets(t);
      break;
    }
    case ControlMode::delta_ee_position: {
      FingertipPositions t = forward_kinematics(state.joint_positions, pc);
      for (int k = 0; k < 3; ++k) t[k] += v.segment<3>(3 * k);
      r.values = ik_targets(t);
      break;
    }
  }
  if (r.torque) r.values = r.values.cwiseMax(-pc.torque_limit).cwiseMin(pc.torque_limit);
  return r;
}

namespace {

struct BodyForce {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

struct Fingertip {
  Vec3 position;
  Vec3 velocity;
  Mat3 jacobian;
};

Mat3 body_inertia_world(const BlockState& b) {
  const Vec3 s2 = b.size.cwiseProduct(b.size);
  const Vec3 diag = (b.mass / 12.0) * Vec3(s2.y() + s2.z(), s2.x() + s2.z(), s2.x() + s2.y());
  const Mat3 r = b.pose.orientation.toRotationMatrix();
  return r * diag.asDiagonal() * r.transpose();
}

Vec3 point_velocity(const BlockState& b, const Vec3& p) {
  return b.linear_velocity + b.angular_velocity.cross(p - b.pose.position);
}

// Spring-damper normal force with viscous friction clamped to the Coulomb cone.
// Returns the force on the first body.
Vec3 contact_force(const ContactPoint& c, const Vec3& relative_velocity, double stiffness,
                   double damping, double friction_damping, double mu) {
  const double vn = relative_velocity.dot(c.normal);
  const double normal = stiffness * c.depth - damping * vn;
  if (normal <= 0.0) return Vec3::Zero();
  const Vec3 vt = relative_velocity - vn * c.normal;
  Vec3 ft = -friction_damping * vt;
  const double ft_norm = ft.norm();
  const double limit = mu * normal;
  if (ft_norm > limit) ft *= limit / ft_norm;
  return normal * c.normal + ft;
}

class Substepper {
 public:
  Substepper(WorldState& s, const PhysicsConstants& pc) : s_(s), pc_(pc) {
    forces_.resize(s.blocks.size());
    inertia_ = joint_inertia(s, pc);
  }

  void step(const ResolvedCommand& cmd, double h) {
    for (BodyForce& f : forces_) f = BodyForce{};
    joint_torque_.setZero();
    if (s_.robot_enabled) update_fingertips();
    block_contacts();
    if (s_.robot_enabled) fingertip_contacts();
    integrate_blocks(h);
    if (s_.robot_enabled) integrate_robot(cmd, h);
    s_.time += h;
  }

 private:
  void update_fingertips() {
    const FingertipPositions tips = forward_kinematics(s_.joint_positions, pc_);
    for (int k = 0; k < 3; ++k) {
      tips_[k].position = tips[k];
      tips_[k].jacobian = finger_jacobian(s_.joint_positions, k, pc_);
      tips_[k].velocity = tips_[k].jacobian * s_.joint_velocities.segment<3>(3 * k);
    }
  }

  void apply_manifold(int a, int b, double mu) {
    if (scratch_.empty()) return;
    const double n = static_cast<double>(scratch_.size());
    const double c = pc_.contact_damping / n;
    const double ct = pc_.friction_damping / n;
    for (const ContactPoint& cp : scratch_) {
      Vec3 v = point_velocity(s_.blocks[a], cp.point);
      if (b >= 0) v -= point_velocity(s_.blocks[b], cp.point);
      const Vec3 f = contact_force(cp, v, pc_.contact_stiffness, c, ct, mu);
      forces_[a].force += f;
      forces_[a].torque += (cp.point - s_.blocks[a].pose.position).cross(f);
      if (b >= 0) {
        forces_[b].force -= f;
        forces_[b].torque -= (cp.point - s_.blocks[b].pose.position).cross(f);
      }
    }
  }

  void block_contacts() {
    const std::size_t n = s_.blocks.size();
    cuboids_.resize(n);
    for (std::size_t i = 0; i < n; ++i) cuboids_[i] = s_.blocks[i].cuboid();
    for (std::size_t i = 0; i < n; ++i) {
      scratch_.clear();
      detail::box_floor_contacts(cuboids_[i], scratch_);
      apply_manifold(static_cast<int>(i), -1, s_.floor_friction);
      scratch_.clear();
      detail::box_wall_contacts(cuboids_[i], pc_.stage_radius, scratch_);
      apply_manifold(static_cast<int>(i), -1, s_.stage_friction);
      for (const Cuboid& obstacle : s_.obstacles) {
        if (!near(cuboids_[i], obstacle)) continue;
        scratch_.clear();
        detail::box_box_contacts(cuboids_[i], obstacle, scratch_);
        apply_manifold(static_cast<int>(i), -1, pc_.block_friction);
      }
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!near(cuboids_[i], cuboids_[j])) continue;
        scratch_.clear();
        detail::box_box_contacts(cuboids_[i], cuboids_[j], scratch_);
        apply_manifold(static_cast<int>(i), static_cast<int>(j), pc_.block_friction);
      }
    }
  }

  static bool near(const Cuboid& a, const Cuboid& b) {
    const double r = 0.5 * (a.size.norm() + b.size.norm());
    return (a.pose.position - b.pose.position).squaredNorm() <= r * r;
  }

  void fingertip_contacts() {
    const double radius = pc_.fingertip_radius;
    for (int k = 0; k < 3; ++k) {
      const Fingertip& tip = tips_[k];
      Vec3 on_tip = Vec3::Zero();
      for (std::size_t i = 0; i < s_.blocks.size(); ++i) {
        ContactPoint cp;
        if (!detail::sphere_box_contact(tip.position, radius, cuboids_[i], cp)) continue;
        const Vec3 v = tip.velocity - point_velocity(s_.blocks[i], cp.point);
        const Vec3 f = contact_force(cp, v, pc_.contact_stiffness, pc_.contact_damping,
                                     pc_.friction_damping, pc_.fingertip_friction);
        on_tip += f;
        forces_[i].force -= f;
        forces_[i].torque -= (cp.point - s_.blocks[i].pose.position).cross(f);
      }
      for (const Cuboid& obstacle : s_.obstacles) {
        ContactPoint cp;
        if (!detail::sphere_box_contact(tip.position, radius, obstacle, cp)) continue;
        on_tip += contact_force(cp, tip.velocity, pc_.contact_stiffness, pc_.contact_damping,
                                pc_.friction_damping, pc_.fingertip_friction);
      }
      const double floor_depth = radius - tip.position.z();
      if (floor_depth > 0.0) {
        const ContactPoint cp{tip.position, Vec3::UnitZ(), floor_depth};
        on_tip += contact_force(cp, tip.velocity, pc_.contact_stiffness, pc_.contact_damping,
                                pc_.friction_damping, s_.floor_friction);
      }
      joint_torque_.segment<3>(3 * k) = tip.jacobian.transpose() * on_tip;
    }
  }

  void integrate_blocks(double h) {
    const Vec3 g(0.0, 0.0, s_.gravity_z);
    for (std::size_t i = 0; i < s_.blocks.size(); ++i) {
      BlockState& b = s_.blocks[i];
      b.linear_velocity += (forces_[i].force / b.mass + g) * h;
      const Mat3 inertia = body_inertia_world(b);
      const Vec3 w = b.angular_velocity;
      const Vec3 rhs = forces_[i].torque - w.cross(inertia * w);
      b.angular_velocity += inertia.ldlt().solve(rhs) * h;
      b.pose.position += b.linear_velocity * h;
      const double angle = b.angular_velocity.norm() * h;
      if (angle > 0.0) {
        const Quat dq(Eigen::AngleAxisd(angle, b.angular_velocity.normalized()));
        b.pose.orientation = (dq * b.pose.orientation).normalized();
      }
    }
  }

  void integrate_robot(const ResolvedCommand& cmd, double h) {
    const JointVector& lo = joint_lower_limits();
    const JointVector& hi = joint_upper_limits();
    JointVector tau_cmd;
    if (cmd.torque) {
      tau_cmd = cmd.values;
    } else {
      tau_cmd = pc_.position_gain * (cmd.values - s_.joint_positions) -
                pc_.velocity_gain * s_.joint_velocities;
    }
    tau_cmd = tau_cmd.cwiseMax(-pc_.torque_limit).cwiseMin(pc_.torque_limit);
    s_.applied_torques = tau_cmd;
    for (int j = 0; j < 9; ++j) {
      const double tau = tau_cmd[j] - pc_.joint_damping * s_.joint_velocities[j] + joint_torque_[j];
      s_.joint_velocities[j] += tau / inertia_[j] * h;
      s_.joint_positions[j] += s_.joint_velocities[j] * h;
      if (s_.joint_positions[j] < lo[j]) {
        s_.joint_positions[j] = lo[j];
        s_.joint_velocities[j] = std::max(0.0, s_.joint_velocities[j]);
      } else if (s_.joint_positions[j] > hi[j]) {
        s_.joint_positions[j] = hi[j];
        s_.joint_velocities[j] = std::min(0.0, s_.joint_velocities[j]);
      }
    }
  }

  WorldState& s_;
  const PhysicsConstants& pc_;
  std::vector<BodyForce> forces_;
  std::vector<Cuboid> cuboids_;
  std::vector<ContactPoint> scratch_;
  std::array<Fingertip, 3> tips_;
  JointVector joint_torque_ = JointVector::Zero();
  JointVector inertia_;
};

void check_finite(const WorldState& s) {
  for (std::size_t i = 0; i < s.blocks.size(); ++i) {
    const BlockState& b = s.blocks[i];
    if (!b.pose.position.allFinite() || !b.pose.orientation.coeffs().allFinite() ||
        !b.linear_velocity.allFinite() || !b.angular_velocity.allFinite()) {
      const std::string name = "block_" + std::to_string(i);
      throw SimulationDiverged(name, "simulation diverged at " + name);
    }
  }
  for (int k = 0; k < 3; ++k) {
    if (!s.joint_positions.segment<3>(3 * k).allFinite() ||
        !s.joint_velocities.segment<3>(3 * k).allFinite()) {
      const std::string name = "finger_" + std::to_string(k);
      throw SimulationDiverged(name, "simulation diverged at " + name);
    }
  }
}

}  // namespace

WorldState step_world(const WorldState& state, const ResolvedCommand& cmd, double dt,
                      const PhysicsConstants& pc) {
  WorldState next = state;
  Substepper sub(next, pc);
  const double h = dt / pc.substeps;
  for (int i = 0; i < pc.substeps; ++i) sub.step(cmd, h);
  next.time = state.time + dt;
  check_finite(next);
  return next;
}

WorldState step_world(const WorldState& state, const RobotCommand& cmd, double dt,
                      const PhysicsConstants& pc) {
  return step_world(state, resolve_command(state, cmd, pc), dt, pc);
}

double kinetic_energy(const WorldState& s, const PhysicsConstants& pc) {
  double e = 0.0;
  for (const BlockState& b : s.blocks) {
    e += 0.5 * b.mass * b.linear_velocity.squaredNorm();
    e += 0.5 * b.angular_velocity.dot(body_inertia_world(b) * b.angular_velocity);
  }
  if (s.robot_enabled) {
    const JointVector inertia = joint_inertia(s, pc);
    for (int j = 0; j < 9; ++j) e += 0.5 * inertia[j] * s.joint_velocities[j] * s.joint_velocities[j];
  }
  return e;
}

double mechanical_energy(const WorldState& s, const PhysicsConstants& pc) {
  double e = kinetic_energy(s, pc);
  std::vector<ContactPoint> cps;
  std::vector<Cuboid> boxes;
  for (const BlockState& b : s.blocks) boxes.push_back(b.cuboid());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    e -= s.blocks[i].mass * s.gravity_z * s.blocks[i].pose.position.z();
    detail::box_floor_contacts(boxes[i], cps);
    detail::box_wall_contacts(boxes[i], pc.stage_radius, cps);
    for (const Cuboid& o : s.obstacles) detail::box_box_contacts(boxes[i], o, cps);
    for (std::size_t j = i + 1; j < boxes.size(); ++j) detail::box_box_contacts(boxes[i], boxes[j], cps);
  }
  if (s.robot_enabled) {
    const FingertipPositions tips = forward_kinematics(s.joint_positions, pc);
    for (const Vec3& t : tips) {
      for (const Cuboid& b : boxes) {
        ContactPoint cp;
        if (detail::sphere_box_contact(t, pc.fingertip_radius, b, cp)) cps.push_back(cp);
      }
    }
  }
  for (const ContactPoint& cp : cps) e += 0.5 * pc.contact_stiffness * cp.depth * cp.depth;
  return e;
}

double max_block_penetration(const WorldState& s) {
  double worst = 0.0;
  std::vector<Cuboid> boxes;
  for (const BlockState& b : s.blocks) boxes.push_back(b.cuboid());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    worst = std::max(worst, -boxes[i].lowest_z());
    for (const Cuboid& o : s.obstacles) worst = std::max(worst, detail::box_box_depth(boxes[i], o));
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      worst = std::max(worst, detail::box_box_depth(boxes[i], boxes[j]));
    }
  }
  return worst;
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != N) throw ConfigError("expected a vector of length " + std::to_string(N));
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out[i] = v[i];
  return out;
}

}  // namespace

nlohmann::json to_json(const WorldState& s) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockState& b : s.blocks) {
    blocks.push_back({{"pose", to_json(b.pose)},
                      {"linear_velocity", vec_json(b.linear_velocity)},
                      {"angular_velocity", vec_json(b.angular_velocity)},
                      {"size", vec_json(b.size)},
                      {"mass", b.mass},
                      {"color", vec_json(b.color)}});
  }
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Cuboid& o : s.obstacles) obstacles.push_back(to_json(o));
  return {{"time", s.time},
          {"joint_positions", vec_json(s.joint_positions)},
          {"joint_velocities", vec_json(s.joint_velocities)},
          {"applied_torques", vec_json(s.applied_torques)},
          {"blocks", blocks},
          {"obstacles", obstacles},
          {"gravity_z", s.gravity_z},
          {"floor_friction", s.floor_friction},
          {"stage_friction", s.stage_friction},
          {"link_masses", vec_json(s.link_masses)},
          {"robot_enabled", s.robot_enabled}};
}

WorldState world_from_json(const nlohmann::json& j) {
  WorldState s;
  s.time = j.at("time").get<double>();
  s.joint_positions = vec_from<9>(j.at("joint_positions"));
  s.joint_velocities = vec_from<9>(j.at("joint_velocities"));
  s.applied_torques = vec_from<9>(j.at("applied_torques"));
  for (const auto& b : j.at("blocks")) {
    BlockState bs;
    bs.pose = pose_from_json(b.at("pose"));
    bs.linear_velocity = vec_from<3>(b.at("linear_velocity"));
    bs.angular_velocity = vec_from<3>(b.at("angular_velocity"));
    bs.size = vec_from<3>(b.at("size"));
    bs.mass = b.at("mass").get<double>();
    bs.color = vec_from<3>(b.at("color"));
    s.blocks.push_back(bs);
  }
  for (const auto& o : j.at("obstacles")) s.obstacles.push_back(cuboid_from_json(o));
  s.gravity_z = j.at("gravity_z").get<double>();
  s.floor_friction = j.at("floor_friction").get<double>();
  s.stage_friction = j.at("stage_friction").get<double>();
  s.link_masses = vec_from<9>(j.at("link_masses"));
  s.robot_enabled = j.at("robot_enabled").get<bool>();
  return s;
}

}  // namespace blockbench
