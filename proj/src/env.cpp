#include "blockbench/env.hpp"

namespace blockbench {

namespace {

void push(Observation& o, const Vec3& v) { o.insert(o.end(), {v.x(), v.y(), v.z()}); }
void push(Observation& o, const Quat& q) { o.insert(o.end(), {q.w(), q.x(), q.y(), q.z()}); }

void push_static(Observation& o, const Cuboid& c) {
  push(o, c.pose.position);
  push(o, c.pose.orientation);
  push(o, c.size);
}

}  // namespace

int observation_length(int n_blocks, int n_goal_parts, int n_obstacles) {
  return 28 + 17 * n_blocks + 10 * (n_goal_parts + n_obstacles);
}

nlohmann::json observation_layout(int n_blocks, int n_goal_parts, int n_obstacles) {
  nlohmann::json segs = nlohmann::json::array();
  int at = 0;
  auto seg = [&](const std::string& name, int len) {
    segs.push_back({{"name", name}, {"offset", at}, {"length", len}});
    at += len;
  };
  seg("time_left_fraction", 1);
  seg("joint_positions", 9);
  seg("joint_velocities", 9);
  seg("fingertip_positions", 9);
  for (int i = 0; i < n_blocks; ++i) {
    const std::string p = "block_" + std::to_string(i) + ".";
    seg(p + "position", 3);
    seg(p + "orientation", 4);
    seg(p + "linear_velocity", 3);
    seg(p + "angular_velocity", 3);
    seg(p + "size", 3);
    seg(p + "mass", 1);
  }
  auto part = [&](const std::string& p) {
    seg(p + "position", 3);
    seg(p + "orientation", 4);
    seg(p + "size", 3);
  };
  for (int j = 0; j < n_goal_parts; ++j) part("goal_" + std::to_string(j) + ".");
  for (int k = 0; k < n_obstacles; ++k) part("obstacle_" + std::to_string(k) + ".");
  return {{"length", at}, {"segments", segs}};
}

ObservationView parse_observation(const Observation& o, int n_blocks, int n_goal_parts, int n_obstacles) {
  if (static_cast<int>(o.size()) != observation_length(n_blocks, n_goal_parts, n_obstacles)) {
    throw ActionError("observation of length " + std::to_string(o.size()) + " does not match the layout");
  }
  std::size_t at = 0;
  auto vec3 = [&] {
    const Vec3 v(o[at], o[at + 1], o[at + 2]);
    at += 3;
    return v;
  };
  auto quat = [&] {
    const Quat q(o[at], o[at + 1], o[at + 2], o[at + 3]);
    at += 4;
    return q;
  };
  ObservationView v;
  v.time_left_fraction = o[at++];
  for (int i = 0; i < 9; ++i) v.joint_positions[i] = o[at++];
  for (int i = 0; i < 9; ++i) v.joint_velocities[i] = o[at++];
  for (Vec3& t : v.fingertips) t = vec3();
  for (int i = 0; i < n_blocks; ++i) {
    ObservationView::Block b;
    b.position = vec3();
    b.orientation = quat();
    b.linear_velocity = vec3();
    b.angular_velocity = vec3();
    b.size = vec3();
    b.mass = o[at++];
    v.blocks.push_back(b);
  }
  auto part = [&] {
    ObservationView::Part p;
    p.position = vec3();
    p.orientation = quat();
    p.size = vec3();
    return p;
  };
  for (int j = 0; j < n_goal_parts; ++j) v.goal.push_back(part());
  for (int k = 0; k < n_obstacles; ++k) v.obstacles.push_back(part());
  return v;
}

ObservationView parse_observation(const Observation& o) {
  const int rest = static_cast<int>(o.size()) - observation_length(0, 0, 0);
  for (int k = 0; k <= 1; ++k) {
    if (rest - 10 * k > 0 && (rest - 10 * k) % 27 == 0) {
      const int n = (rest - 10 * k) / 27;
      return parse_observation(o, n, n, k);
    }
  }
  throw ActionError("cannot infer the layout of an observation of length " + std::to_string(o.size()));
}

Environment::Environment(EnvOptions options, const VariableCatalog& catalog, const PhysicsConstants& physics)
    : options_(options), catalog_(catalog), physics_(physics) {}

RewardType Environment::reward_type() const {
  if (options_.reward) return *options_.reward;
  return has_dense_reward(task_.family) ? RewardType::dense : RewardType::sparse;
}

void Environment::load_world() {
  const EnvConfig& c = task_.config;
  WorldState w;
  const Values q = c.get("joint_positions");
  for (int k = 0; k < 9; ++k) w.joint_positions[k] = q[k];
  for (const Cuboid& b : task_.blocks) {
    BlockState s;
    s.pose = b.pose;
    s.size = b.size;
    s.mass = b.mass;
    s.color = b.color;
    w.blocks.push_back(s);
  }
  w.obstacles = task_.obstacles;
  w.gravity_z = c.scalar("gravity_z");
  w.floor_friction = c.scalar("floor_friction");
  w.stage_friction = c.scalar("stage_friction");
  for (int k = 0; k < 9; ++k) w.link_masses[k] = c.scalar("link_" + std::to_string(k) + ".mass");
  world_ = w;
}

Observation Environment::reset(const TaskInstance& task, const EnvConfig& config, std::uint64_t seed) {
  if (options_.reward == RewardType::dense && !has_dense_reward(task.family)) {
    throw ConfigError("family " + to_string(task.family) + " has no dense reward");
  }
  task_ = config == task.config ? task : with_config(task, config, catalog_, physics_);
  load_world();
  live_ = true;
  done_ = false;
  steps_ = 0;
  applied_ = 0;
  suppressed_ = 0;
  seed_ = seed;
  return observe();
}

Observation Environment::observe() const {
  Observation o;
  o.reserve(observation_length(task_.num_blocks(), static_cast<int>(task_.goal.parts.size()),
                               static_cast<int>(task_.obstacles.size())));
  const int limit = task_.episode_limit_steps;
  o.push_back(static_cast<double>(limit - steps_) / limit);
  o.insert(o.end(), world_.joint_positions.data(), world_.joint_positions.data() + 9);
  o.insert(o.end(), world_.joint_velocities.data(), world_.joint_velocities.data() + 9);
  for (const Vec3& tip : forward_kinematics(world_.joint_positions, physics_)) push(o, tip);
  for (const BlockState& b : world_.blocks) {
    push(o, b.pose.position);
    push(o, b.pose.orientation);
    push(o, b.linear_velocity);
    push(o, b.angular_velocity);
    push(o, b.size);
    o.push_back(b.mass);
  }
  for (const Cuboid& g : task_.goal.parts) push_static(o, g);
  for (const Cuboid& ob : task_.obstacles) push_static(o, ob);
  return o;
}

double Environment::fractional_success() const {
  return blockbench::fractional_success(world_, task_.goal, physics_.voxel_edge);
}

RewardSnapshot Environment::snapshot() const { return snapshot_of(world_, physics_); }

StepResult Environment::step(const RobotCommand& action) {
  if (!live_) throw LifecycleError("step before reset");
  if (done_) throw LifecycleError("step after the episode ended; call reset");
  if (action.mode != options_.action_mode) {
    throw ActionError("action mode " + to_string(action.mode) + " does not match the environment's " +
                      to_string(options_.action_mode));
  }
  const ResolvedCommand cmd = resolve_command(world_, action, physics_);
  const RewardSnapshot prev = snapshot();
  WorldState w = world_;
  for (int k = 0; k < physics_.control_every; ++k) w = step_world(w, cmd, physics_.sim_dt, physics_);
  world_ = std::move(w);
  ++steps_;
  done_ = steps_ >= task_.episode_limit_steps;

  StepResult r;
  r.info.fractional_success = fractional_success();
  r.info.interventions_applied = applied_;
  r.info.suppressed = suppressed_;
  r.info.time_left_seconds = (task_.episode_limit_steps - steps_) * physics_.control_dt();
  switch (reward_type()) {
    case RewardType::dense: r.reward = dense_reward(reward_context(task_, prev, snapshot())); break;
    case RewardType::sparse: r.reward = sparse_reward(r.info.fractional_success, physics_.sparse_threshold); break;
    case RewardType::fractional: r.reward = r.info.fractional_success; break;
  }
  r.done = done_;
  r.observation = observe();
  return r;
}

TaskInstance Environment::task() const {
  TaskInstance t = task_;
  for (std::size_t i = 0; i < world_.blocks.size(); ++i) t.blocks[i].pose = world_.blocks[i].pose;
  t.config = exposed_variables();
  return t;
}

EnvConfig Environment::exposed_variables() const {
  EnvConfig c = task_.config;
  if (!live_) return c;
  c.set("joint_positions", Values(world_.joint_positions.data(), world_.joint_positions.data() + 9));
  for (std::size_t i = 0; i < world_.blocks.size(); ++i) {
    const auto cyl = cylindrical_from_pose(world_.blocks[i].pose);
    c.set("block_" + std::to_string(i) + ".pose_cyl", {cyl[0], wrap_angle(cyl[1]), cyl[2], wrap_angle(cyl[3])});
  }
  return c;
}

InterventionOutcome Environment::do_intervention(const Intervention& iv) {
  if (!live_) throw LifecycleError("intervention before reset");
  InterventionOutcome out;
  if (iv.empty()) {
    out.applied = true;
    out.observation = observe();
    return out;
  }
  auto r = intervene(task(), iv, {}, catalog_, physics_);
  if (auto* rej = std::get_if<Rejection>(&r)) {
    ++suppressed_;
    out.rejection = *rej;
    out.observation = observe();
    return out;
  }
  const TaskInstance next = std::get<TaskInstance>(std::move(r));
  const EnvConfig& c = next.config;
  for (std::size_t i = 0; i < world_.blocks.size(); ++i) {
    BlockState& b = world_.blocks[i];
    const Cuboid& nb = next.blocks[i];
    if (nb.pose.position != b.pose.position || nb.pose.orientation.coeffs() != b.pose.orientation.coeffs()) {
      b.pose = nb.pose;
      b.linear_velocity.setZero();
      b.angular_velocity.setZero();
    }
    b.size = nb.size;
    b.mass = nb.mass;
    b.color = nb.color;
  }
  if (iv.assignments.count("joint_positions")) {
    const Values q = c.get("joint_positions");
    for (int k = 0; k < 9; ++k) world_.joint_positions[k] = q[k];
    world_.joint_velocities.setZero();
  }
  world_.gravity_z = c.scalar("gravity_z");
  world_.floor_friction = c.scalar("floor_friction");
  world_.stage_friction = c.scalar("stage_friction");
  for (int k = 0; k < 9; ++k) world_.link_masses[k] = c.scalar("link_" + std::to_string(k) + ".mass");
  task_ = next;
  ++applied_;
  out.applied = true;
  out.observation = observe();
  return out;
}

void Environment::restore(const WorldState& w, int steps) {
  world_ = w;
  steps_ = steps;
  done_ = steps_ >= task_.episode_limit_steps;
}

}  // namespace blockbench
