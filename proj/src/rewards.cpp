#include "blockbench/rewards.hpp"

namespace blockbench {

namespace {

double d_tips(const FingertipPositions& e, const Vec3& o) {
  double s = 0.0;
  for (const Vec3& tip : e) s += (tip - o).norm();
  return s;
}

double xy_dist(const Vec3& a, const Vec3& b) { return (a - b).head<2>().norm(); }

}  // namespace

RewardSnapshot snapshot_of(const WorldState& w, const PhysicsConstants& pc) {
  RewardSnapshot s;
  s.time = w.time;
  s.fingertips = forward_kinematics(w.joint_positions, pc);
  for (const BlockState& b : w.blocks) s.block_positions.push_back(b.pose.position);
  s.joint_velocities = w.joint_velocities;
  return s;
}

RewardContext reward_context(const TaskInstance& task, const RewardSnapshot& prev, const RewardSnapshot& curr) {
  RewardContext c;
  c.family = task.family;
  c.prev = prev;
  c.curr = curr;
  for (const Cuboid& b : task.blocks) c.block_heights.push_back(b.size.z());
  for (const Cuboid& g : task.goal.parts) {
    c.goal_positions.push_back(g.pose.position);
    c.goal_heights.push_back(g.size.z());
  }
  return c;
}

double fractional_success(const WorldState& state, const GoalShape& goal, double voxel_edge) {
  std::vector<Cuboid> blocks;
  for (const BlockState& b : state.blocks) blocks.push_back(b.cuboid());
  OverlapOptions opt;
  opt.voxel_edge = voxel_edge;
  return fractional_overlap(blocks, goal, opt);
}

double sparse_reward(double fraction, double threshold) { return fraction >= threshold ? 1.0 : 0.0; }

bool has_dense_reward(Family f) {
  return f == Family::pushing || f == Family::picking || f == Family::pick_and_place || f == Family::stacking2;
}

double dense_reward(const RewardContext& c) {
  if (!has_dense_reward(c.family)) throw TaskError("no dense reward for " + to_string(c.family));
  const auto& p = c.prev;
  const auto& q = c.curr;
  const Vec3& o1 = q.block_positions.at(0);
  const Vec3& o1p = p.block_positions.at(0);
  const Vec3& g1 = c.goal_positions.at(0);
  const double dv = (q.joint_velocities - p.joint_velocities).norm();
  const double de1 = d_tips(q.fingertips, o1) - d_tips(p.fingertips, o1p);

  switch (c.family) {
    case Family::pushing:
      return -750.0 * de1 - 250.0 * ((o1 - g1).norm() - (o1p - g1).norm());
    case Family::picking:
      return -750.0 * de1 - 250.0 * (std::abs(o1.z() - g1.z()) - std::abs(o1p.z() - g1.z())) -
             125.0 * (xy_dist(o1, g1) - xy_dist(o1p, g1)) - 0.005 * dv;
    case Family::pick_and_place: {
      const double t = c.block_heights.at(0) != c.goal_heights.at(0) ? 0.15 : 0.5 * c.goal_heights.at(0);
      return -750.0 * de1 - 50.0 * (xy_dist(o1, g1) - xy_dist(o1p, g1)) -
             250.0 * (std::abs(o1.z() - t) - std::abs(o1p.z() - t)) - 0.005 * dv;
    }
    case Family::stacking2: {
      const Vec3& o2 = q.block_positions.at(1);
      const Vec3& o2p = p.block_positions.at(1);
      const Vec3& g2 = c.goal_positions.at(1);
      const double d1 = d_tips(q.fingertips, o1);
      double r = 0.0;
      if (d1 > 0.02) r += -750.0 * de1 - 250.0 * ((o1 - g1).norm() - (o1p - g1).norm());
      if (d1 < 0.02) {
        const double de2 = d_tips(q.fingertips, o2) - d_tips(p.fingertips, o2p);
        // Second-block height term pairs o2 at t with o1 at t-1, as in the reward table.
        r += -750.0 * de2 - 250.0 * (std::abs(o2.z() - g2.z()) - std::abs(o1p.z() - g2.z()));
        if (o2.z() - g2.z() > 0.0) r -= 125.0 * (xy_dist(o2, g2) - xy_dist(o2p, g2));
      }
      return r - 0.005 * dv;
    }
    default: break;
  }
  return 0.0;
}

std::string to_string(RewardType r) {
  switch (r) {
    case RewardType::dense: return "dense";
    case RewardType::sparse: return "sparse";
    case RewardType::fractional: return "fractional";
  }
  return "dense";
}

RewardType reward_type_from_string(std::string_view s) {
  for (RewardType r : {RewardType::dense, RewardType::sparse, RewardType::fractional}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown reward type '" + std::string(s) + "'");
}

nlohmann::json to_json(const RewardSnapshot& s) {
  nlohmann::json tips = nlohmann::json::array();
  for (const Vec3& e : s.fingertips) tips.push_back({e.x(), e.y(), e.z()});
  nlohmann::json blocks = nlohmann::json::array();
  for (const Vec3& o : s.block_positions) blocks.push_back({o.x(), o.y(), o.z()});
  return {{"time", s.time},
          {"fingertips", tips},
          {"block_positions", blocks},
          {"joint_velocities", std::vector<double>(s.joint_velocities.data(), s.joint_velocities.data() + 9)}};
}

RewardSnapshot snapshot_from_json(const nlohmann::json& j) {
  RewardSnapshot s;
  s.time = j.at("time").get<double>();
  for (int k = 0; k < 3; ++k) {
    const auto v = j.at("fingertips").at(k).get<std::array<double, 3>>();
    s.fingertips[k] = Vec3(v[0], v[1], v[2]);
  }
  for (const auto& b : j.at("block_positions")) {
    const auto v = b.get<std::array<double, 3>>();
    s.block_positions.push_back(Vec3(v[0], v[1], v[2]));
  }
  const auto v = j.at("joint_velocities").get<std::vector<double>>();
  if (v.size() != 9) throw LogError("snapshot needs 9 joint velocities");
  for (int k = 0; k < 9; ++k) s.joint_velocities[k] = v[k];
  return s;
}

}  // namespace blockbench
