#include "blockbench/tasks.hpp"

#include "blockbench/dynamics.hpp"
#include "blockbench/rng.hpp"
#include "contact.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blockbench {

namespace {

constexpr double kTowerBlockEdge = 0.055;
constexpr double kLevelGap = 0.002;       // horizontal gap between blocks of one level
constexpr double kStableDrift = 5e-3;     // settle displacement tolerated for goal shapes
constexpr double kWallMargin = 0.003;
constexpr double kPileSpread = 0.08;
constexpr double kDropTilt = 0.5;       // rad, largest tilt of a dropped block     // general goals: part centers within this of the pile center
constexpr int kMaxBlocks = 16;
const Vec3 kObstacleSize(0.35, 0.015, 0.065);

std::string bid(int i, const char* var) { return "block_" + std::to_string(i) + "." + var; }
std::string gid(int j, const char* var) { return "goal_" + std::to_string(j) + "." + var; }

Vec3 vec3(const Values& v) { return Vec3(v.at(0), v.at(1), v.at(2)); }
Values values(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Values cyl_values(const Vec3& p, double yaw) {
  const double r = std::hypot(p.x(), p.y());
  const double az = r > 0.0 ? wrap_angle(std::atan2(p.y(), p.x())) : 0.0;
  return {r, az, p.z(), wrap_angle(yaw)};
}

Pose pose_of(const Values& cyl) { return pose_from_cylindrical(cyl.at(0), cyl.at(1), cyl.at(2), cyl.at(3)); }

Quat yaw_quat(double yaw) { return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())); }

Cuboid block_from_config(const EnvConfig& c, int i) {
  Cuboid b;
  b.pose = pose_of(c.get(bid(i, "pose_cyl")));
  b.size = vec3(c.get(bid(i, "size")));
  b.mass = c.scalar(bid(i, "mass"));
  b.color = vec3(c.get(bid(i, "color")));
  return b;
}

Cuboid goal_from_config(const EnvConfig& c, int j, const Quat& tilt) {
  Cuboid g;
  g.pose = pose_of(c.get(gid(j, "pose_cyl")));
  g.pose.orientation = (g.pose.orientation * tilt).normalized();
  g.size = vec3(c.get(gid(j, "size")));
  g.color = vec3(c.get(gid(j, "color")));
  return g;
}

/// A goal structure in its own frame: parts sit on z = 0, centered near the
/// origin, with a heading and tilt each.
struct Structure {
  std::vector<Vec3> positions;
  std::vector<double> yaws;
  std::vector<Quat> tilts;
  std::vector<Vec3> sizes;
  std::vector<int> levels;
};

struct Anchor {
  double radius = 0.0;
  double azimuth = 0.0;
  double yaw = 0.0;
};

/// Writes the structure placed at `anchor` into goal pose/size assignments.
void place_structure(const Structure& s, const Anchor& a, std::map<std::string, Values>& out) {
  const Vec3 origin(a.radius * std::cos(a.azimuth), a.radius * std::sin(a.azimuth), 0.0);
  const Quat rot = yaw_quat(a.yaw);
  for (std::size_t j = 0; j < s.positions.size(); ++j) {
    const Vec3 p = origin + rot * s.positions[j];
    out[gid(static_cast<int>(j), "pose_cyl")] = cyl_values(p, a.yaw + s.yaws[j]);
    out[gid(static_cast<int>(j), "size")] = values(s.sizes[j]);
  }
}

/// Recovers the structure (in a frame centered on the parts' mean xy, heading
/// of part 0) from the current goal, so that it can be moved rigidly.
Structure structure_of(const TaskInstance& t, Anchor& anchor) {
  Structure s;
  Vec3 mean = Vec3::Zero();
  const int n = static_cast<int>(t.goal.parts.size());
  for (const Cuboid& p : t.goal.parts) mean += p.pose.position;
  mean /= n;
  mean.z() = 0.0;
  const Values cyl0 = t.config.get(gid(0, "pose_cyl"));
  const double yaw0 = cyl0.at(3);
  anchor.radius = std::hypot(mean.x(), mean.y());
  anchor.azimuth = anchor.radius > 0.0 ? std::atan2(mean.y(), mean.x()) : 0.0;
  anchor.yaw = yaw0;
  const Quat inv = yaw_quat(-yaw0);
  for (int j = 0; j < n; ++j) {
    const Values cyl = t.config.get(gid(j, "pose_cyl"));
    s.positions.push_back(inv * (pose_of(cyl).position - mean));
    s.yaws.push_back(cyl.at(3) - yaw0);
    s.tilts.push_back(j < static_cast<int>(t.goal_tilt.size()) ? t.goal_tilt[j] : Quat::Identity());
    s.sizes.push_back(vec3(t.config.get(gid(j, "size"))));
    s.levels.push_back(0);
  }
  return s;
}

Structure single_part(const Vec3& size, double height) {
  Structure s;
  s.positions = {Vec3(0.0, 0.0, height)};
  s.yaws = {0.0};
  s.tilts = {Quat::Identity()};
  s.sizes = {size};
  s.levels = {0};
  return s;
}

Structure column(const std::vector<Vec3>& sizes) {
  Structure s;
  double z = 0.0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    s.positions.push_back(Vec3(0.0, 0.0, z + 0.5 * sizes[k].z()));
    z += sizes[k].z();
    s.yaws.push_back(0.0);
    s.tilts.push_back(Quat::Identity());
    s.sizes.push_back(sizes[k]);
    s.levels.push_back(static_cast<int>(k));
  }
  return s;
}

std::array<int, 3> tower_grid(const Vec3& dims, const Vec3& size) {
  std::array<int, 3> n{};
  for (int i = 0; i < 3; ++i) n[i] = static_cast<int>(std::floor(dims[i] / size[i] + 1e-9));
  return n;
}

int tower_count(const Vec3& dims, const Vec3& size) {
  const auto n = tower_grid(dims, size);
  return n[0] * n[1] * n[2];
}

Structure tower(const Vec3& dims, const Vec3& size) {
  const auto n = tower_grid(dims, size);
  Structure s;
  for (int k = 0; k < n[2]; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i) {
        s.positions.push_back(Vec3((i - 0.5 * (n[0] - 1)) * size.x(), (j - 0.5 * (n[1] - 1)) * size.y(),
                                   (k + 0.5) * size.z()));
        s.yaws.push_back(0.0);
        s.tilts.push_back(Quat::Identity());
        s.sizes.push_back(size);
        s.levels.push_back(k);
      }
    }
  }
  return s;
}

std::vector<Cuboid> structure_cuboids(const Structure& s) {
  std::vector<Cuboid> out;
  for (std::size_t j = 0; j < s.positions.size(); ++j) {
    Cuboid c;
    c.pose.position = s.positions[j];
    c.pose.orientation = (yaw_quat(s.yaws[j]) * s.tilts[j]).normalized();
    c.size = s.sizes[j];
    c.mass = 0.03;
    out.push_back(c);
  }
  return out;
}

/// Random non-increasing split of n blocks into at most `max_levels` levels.
std::vector<int> level_counts(int n, int max_levels, Rng& rng) {
  const int top = std::max(1, std::min(n, max_levels));
  const int low = std::min(2, top);
  const int levels = low + static_cast<int>(rng.below(static_cast<std::uint64_t>(top - low + 1)));
  std::vector<int> counts(levels, 1);
  for (int extra = n - levels; extra > 0; --extra) {
    std::vector<int> open;
    for (int k = 0; k < levels; ++k) {
      if (k == 0 || counts[k] < counts[k - 1]) open.push_back(k);
    }
    ++counts[open[rng.below(open.size())]];
  }
  return counts;
}

/// Levels of blocks, each upper block resting on one block of the level
/// below; a whole level may be shifted by up to 15% of the edge.
Structure stacked(const std::vector<int>& counts, const Vec3& size, Rng& rng, bool shifts) {
  Structure s;
  const double pitch_x = size.x() + kLevelGap;
  const double pitch_y = size.y() + kLevelGap;
  std::vector<Vec3> below;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    std::vector<Vec3> level;
    const int m = counts[k];
    if (k == 0) {
      const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m))));
      const int rows = (m + cols - 1) / cols;
      for (int b = 0; b < m; ++b) {
        const int c = b % cols;
        const int r = b / cols;
        level.push_back(Vec3((c - 0.5 * (cols - 1)) * pitch_x, (r - 0.5 * (rows - 1)) * pitch_y, 0.0));
      }
    } else {
      std::vector<int> idx(below.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (int b = 0; b < m; ++b) {
        const std::size_t pick = b + rng.below(idx.size() - b);
        std::swap(idx[b], idx[pick]);
      }
      std::sort(idx.begin(), idx.begin() + m);
      const double dx = shifts ? rng.uniform(-0.15, 0.15) * size.x() : 0.0;
      const double dy = shifts ? rng.uniform(-0.15, 0.15) * size.y() : 0.0;
      for (int b = 0; b < m; ++b) level.push_back(below[idx[b]] + Vec3(dx, dy, 0.0));
    }
    for (Vec3& p : level) {
      p.z() = (static_cast<double>(k) + 0.5) * size.z();
      s.positions.push_back(p);
      s.yaws.push_back(0.0);
      s.tilts.push_back(Quat::Identity());
      s.sizes.push_back(size);
      s.levels.push_back(static_cast<int>(k));
    }
    below = level;
  }
  return s;
}

int max_levels_for(const VariableCatalog& cat, Space space, double height) {
  const double hi = cat.spec("goal.pose_cyl").intervals(space)[2].hi;
  // Top center (L - 0.5) h must stay below the space's height bound.
  return std::max(1, static_cast<int>(std::floor(hi / height + 0.5 - 1e-9)));
}

}  // namespace

double settle_displacement(const std::vector<Cuboid>& parts, std::uint64_t seed,
                           const PhysicsConstants& physics) {
  const SettleResult r = settle_drop(parts, seed, physics);
  double worst = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    worst = std::max(worst, (r.poses[i].position - parts[i].pose.position).norm());
  }
  return worst;
}

namespace {

Structure stable_stacked(const std::vector<int>& counts, const Vec3& size, Rng& rng,
                         const PhysicsConstants& physics) {
  for (int attempt = 0; attempt < 6; ++attempt) {
    Structure s = stacked(counts, size, rng, true);
    if (settle_displacement(structure_cuboids(s), rng.next(), physics) <= kStableDrift) return s;
  }
  return stacked(counts, size, rng, false);
}

/// Blocks dropped with random headings and tilts and left to settle; the result is
/// lifted so that nothing sinks below the floor.
Structure settled(const std::vector<Vec3>& sizes, Rng& rng, const PhysicsConstants& physics) {
  std::vector<Cuboid> drop;
  for (const Vec3& size : sizes) {
    Cuboid c;
    // Wider drop discs for larger piles keep them at most about two levels tall.
    const double r = std::sqrt(rng.unit()) * 0.03 * std::sqrt(static_cast<double>(sizes.size()));
    const double a = rng.uniform(-kPi, kPi);
    const double heading = rng.uniform(-kPi, kPi);
    const double tilt_axis = rng.uniform(-kPi, kPi);
    const double tilt = rng.uniform(0.0, kDropTilt);
    c.pose.orientation = (yaw_quat(heading) *
                          Quat(Eigen::AngleAxisd(tilt, Vec3(std::cos(tilt_axis), std::sin(tilt_axis), 0.0))))
                             .normalized();
    c.size = size;
    // Lowest drop height clear of the floor and of the blocks already placed.
    c.pose.position = Vec3(r * std::cos(a), r * std::sin(a), 0.0);
    c.pose.position.z() = 0.002 - c.lowest_z();
    Cuboid grown = c;
    grown.size += Vec3::Constant(0.004);
    auto blocked = [&] {
      grown.pose = c.pose;
      for (const Cuboid& d : drop) {
        if (box_pair_overlap(grown, d) > 0.0) return true;
      }
      return false;
    };
    while (blocked()) c.pose.position.z() += 0.005;
    c.mass = 0.03;
    drop.push_back(c);
  }
  const SettleResult r = settle_drop(drop, rng.next(), physics);
  double lowest = 0.0;
  Vec3 mean = Vec3::Zero();
  for (std::size_t i = 0; i < drop.size(); ++i) {
    Cuboid c = drop[i];
    c.pose = r.poses[i];
    lowest = std::min(lowest, c.lowest_z());
    mean += c.pose.position;
  }
  mean /= static_cast<double>(drop.size());
  Structure s;
  for (std::size_t i = 0; i < drop.size(); ++i) {
    const Quat q = r.poses[i].orientation;
    const double yaw = yaw_of(q);
    // 1 um clearance keeps rounding from putting a resting part below h/2.
    const Vec3 p = r.poses[i].position - Vec3(mean.x(), mean.y(), lowest - 1e-6);
    s.positions.push_back(p);
    s.yaws.push_back(yaw);
    s.tilts.push_back((yaw_quat(-yaw) * q).normalized());
    s.sizes.push_back(sizes[i]);
    s.levels.push_back(0);
  }
  return s;
}

bool inside_stage(const Cuboid& c, double stage_radius, double margin) {
  for (const Vec3& p : c.corners()) {
    if (std::hypot(p.x(), p.y()) > stage_radius - margin) return false;
  }
  return true;
}

bool footprints_overlap(const Cuboid& a, const Cuboid& b, double inflate) {
  Cuboid fa = a;
  Cuboid fb = b;
  fa.pose.position.z() = 0.0;
  fb.pose.position.z() = 0.0;
  fa.size = Vec3(a.size.x() + inflate, a.size.y() + inflate, 1.0);
  fb.size = Vec3(b.size.x(), b.size.y(), 1.0);
  return box_pair_overlap(fa, fb) > 0.0;
}

/// Floor spots on a square grid, nearest the center first, skipping the
/// obstacles and preferring spots clear of `avoid`.
std::vector<Vec3> floor_spots(int n, const Vec3& size, const std::vector<Cuboid>& avoid,
                              const std::vector<Cuboid>& obstacles, double stage_radius) {
  const double pitch = std::max(size.x(), size.y()) + 0.01;
  const double limit = stage_radius - 0.5 * std::hypot(size.x(), size.y()) - 0.005;
  const int k = static_cast<int>(std::floor(limit / pitch));
  struct Spot {
    long ring;
    double angle;
    Vec3 p;
  };
  std::vector<Spot> spots;
  for (int i = -k; i <= k; ++i) {
    for (int j = -k; j <= k; ++j) {
      const Vec3 p(i * pitch, j * pitch, 0.5 * size.z());
      if (std::hypot(p.x(), p.y()) > limit) continue;
      spots.push_back({static_cast<long>(i) * i + static_cast<long>(j) * j, std::atan2(p.y(), p.x()), p});
    }
  }
  std::sort(spots.begin(), spots.end(), [](const Spot& a, const Spot& b) {
    return a.ring != b.ring ? a.ring < b.ring : a.angle < b.angle;
  });
  std::vector<Vec3> clear;
  std::vector<Vec3> covered;
  for (const Spot& s : spots) {
    Cuboid c;
    c.pose.position = s.p;
    c.size = size;
    bool blocked = false;
    for (const Cuboid& o : obstacles) blocked = blocked || footprints_overlap(c, o, 0.01);
    if (blocked) continue;
    bool over_goal = false;
    for (const Cuboid& g : avoid) over_goal = over_goal || footprints_overlap(c, g, 0.01);
    (over_goal ? covered : clear).push_back(s.p);
  }
  clear.insert(clear.end(), covered.begin(), covered.end());
  if (static_cast<int>(clear.size()) < n) throw TaskError("not enough floor space for the blocks");
  clear.resize(n);
  return clear;
}

// ---- family predicates ----------------------------------------------------

bool floor_goal_family(Family f) { return f == Family::pushing || f == Family::pick_and_place; }
bool structure_family(Family f) {
  return f == Family::stacked_blocks || f == Family::creative_stacked_blocks || f == Family::general;
}
bool follows_block_size(Family f) { return !structure_family(f); }

Anchor default_anchor(Family f) {
  switch (f) {
    case Family::pushing:
    case Family::pick_and_place:
    case Family::stacking2: return {0.08, kPi / 2, 0.0};
    default: return {0.0, 0.0, 0.0};
  }
}

Cuboid obstacle() {
  Cuboid c;
  c.pose.position = Vec3(0.0, 0.0, 0.5 * kObstacleSize.z());
  c.size = kObstacleSize;
  c.color = Vec3(0.6, 0.6, 0.6);
  return c;
}

EnvConfig default_config(const VariableCatalog& cat, Family f, int n) {
  EnvConfig c;
  for (const std::string& id : cat.instantiate(to_string(f), n, n)) c.set(id, cat.spec(id).default_value);
  c.set("num_blocks", {static_cast<double>(n)});
  return c;
}

/// Rebuilds the goal parts listed in `touched` from the config.
void rebuild_goal(TaskInstance& t, const std::set<int>& touched) {
  for (int j : touched) t.goal.parts[j] = goal_from_config(t.config, j, t.goal_tilt[j]);
}

void build_from_config(TaskInstance& t) {
  const int n = static_cast<int>(t.config.scalar("num_blocks"));
  t.blocks.clear();
  for (int i = 0; i < n; ++i) t.blocks.push_back(block_from_config(t.config, i));
  t.goal.parts.assign(n, Cuboid{});
  if (t.goal_tilt.size() != static_cast<std::size_t>(n)) t.goal_tilt.assign(n, Quat::Identity());
  if (t.goal.imposed.size() != static_cast<std::size_t>(n)) t.goal.imposed.assign(n, true);
  std::set<int> all;
  for (int j = 0; j < n; ++j) all.insert(j);
  rebuild_goal(t, all);
}

std::set<int> indices_with_prefix(const std::map<std::string, Values>& a, const char* prefix) {
  std::set<int> out;
  for (const auto& [id, v] : a) {
    const auto [tmpl, idx] = split_instance_id(id);
    if (idx >= 0 && tmpl.rfind(prefix, 0) == 0) out.insert(idx);
  }
  return out;
}

bool assigned(const Intervention& iv, const std::string& id) { return iv.assignments.count(id) > 0; }

bool any_goal_pose(const Intervention& iv, int n) {
  for (int j = 0; j < n; ++j) {
    if (assigned(iv, gid(j, "pose_cyl"))) return true;
  }
  return false;
}

// ---- validation -----------------------------------------------------------

std::optional<Rejection> check_structure(const TaskInstance& t, bool goal_changed,
                                         const PhysicsConstants& physics) {
  const auto& parts = t.goal.parts;
  const int n = t.num_blocks();
  auto fail = [](RejectCode c, std::string d) { return Rejection{c, std::move(d)}; };

  switch (t.family) {
    case Family::pushing:
    case Family::pick_and_place:
      for (int j = 0; j < n; ++j) {
        const double h = t.config.get(gid(j, "size"))[2];
        if (std::abs(t.config.get(gid(j, "pose_cyl"))[2] - 0.5 * h) > 1e-9) {
          return fail(RejectCode::floor_level, "goal must rest on the floor");
        }
      }
      break;
    case Family::picking:
      for (int j = 0; j < n; ++j) {
        const double h = t.config.get(gid(j, "size"))[2];
        if (t.config.get(gid(j, "pose_cyl"))[2] - 0.5 * h <= 1e-3) {
          return fail(RejectCode::floor_level, "goal must be above the floor");
        }
      }
      if (std::abs(t.config.scalar("goal_height") - t.config.get(gid(0, "pose_cyl"))[2]) > 1e-12) {
        return fail(RejectCode::family_shape, "goal_height disagrees with the goal pose");
      }
      break;
    case Family::stacking2:
    case Family::towers: {
      const Vec3 size = vec3(t.config.get(gid(0, "size")));
      for (int j = 0; j < n; ++j) {
        if (vec3(t.config.get(gid(j, "size"))) != size) {
          return fail(RejectCode::family_shape, "stacked goal parts must share one size");
        }
      }
      Structure expect;
      if (t.family == Family::towers) {
        const Vec3 dims = vec3(t.config.get("tower_dims"));
        if (tower_count(dims, size) != n) {
          return fail(RejectCode::family_block_count, "tower_dims and block size change the block count");
        }
        expect = tower(dims, size);
      } else {
        expect = column({size, size});
      }
      Anchor a;
      const Structure got = structure_of(t, a);
      // Compare in the frame of the structure's own center and heading.
      Vec3 mean = Vec3::Zero();
      for (const Vec3& p : expect.positions) mean += Vec3(p.x(), p.y(), 0.0);
      mean /= n;
      for (int j = 0; j < n; ++j) {
        if ((got.positions[j] - (expect.positions[j] - mean)).norm() > 1e-6 ||
            std::abs(wrap_angle(got.yaws[j])) > 1e-9) {
          return fail(RejectCode::family_shape, "goal parts must be stacked exactly above each other");
        }
      }
      for (int b = 0; b < n; ++b) {
        if (vec3(t.config.get(bid(b, "size"))) != size) {
          return fail(RejectCode::family_shape, "blocks must match the stacked goal size");
        }
      }
      break;
    }
    case Family::stacked_blocks:
    case Family::creative_stacked_blocks:
    case Family::general:
      if (goal_changed) {
        for (const Cuboid& p : parts) {
          if (p.lowest_z() < -1e-6) return fail(RejectCode::floor_level, "goal part below the floor");
        }
        if (settle_displacement(parts, 0, physics) > kStableDrift) {
          return fail(RejectCode::family_shape, "goal shape is not statically stable");
        }
      }
      break;
  }
  if (goal_changed) {
    for (const Cuboid& p : parts) {
      if (!inside_stage(p, physics.stage_radius, 0.0)) {
        return fail(RejectCode::invalid_state, "goal part outside the stage");
      }
      for (const Cuboid& o : t.obstacles) {
        if (box_pair_overlap(p, o) > 0.0) return fail(RejectCode::family_shape, "goal intersects the obstacle");
      }
    }
  }
  return std::nullopt;
}

std::optional<Rejection> check_state(const TaskInstance& t, const std::set<int>& moved, bool joints_moved,
                                     const PhysicsConstants& physics) {
  const double tol = physics.penetration_tolerance;
  auto fail = [](std::string d) { return Rejection{RejectCode::invalid_state, std::move(d)}; };
  for (int i : moved) {
    const Cuboid& b = t.blocks[i];
    if (b.lowest_z() < -tol) return fail("block below the floor");
    if (!inside_stage(b, physics.stage_radius, -tol)) return fail("block outside the stage");
    for (const Cuboid& o : t.obstacles) {
      if (detail::box_box_depth(b, o) > tol) return fail("block intersects the obstacle");
    }
    for (int k = 0; k < t.num_blocks(); ++k) {
      if (k == i) continue;
      if (detail::box_box_depth(b, t.blocks[k]) > tol) return fail("blocks interpenetrate");
    }
  }
  if (joints_moved || !moved.empty()) {
    const Values qv = t.config.get("joint_positions");
    JointVector q;
    for (int k = 0; k < 9; ++k) q[k] = qv[k];
    const auto tips = forward_kinematics(q, physics);
    for (const Vec3& tip : tips) {
      if (joints_moved && tip.z() < physics.fingertip_radius - tol) return fail("fingertip below the floor");
      for (int i = 0; i < t.num_blocks(); ++i) {
        if (!joints_moved && moved.count(i) == 0) continue;
        detail::ContactPoint cp;
        if (detail::sphere_box_contact(tip, physics.fingertip_radius, t.blocks[i], cp) && cp.depth > tol) {
          return fail("fingertip intersects a block");
        }
      }
      if (joints_moved) {
        for (const Cuboid& o : t.obstacles) {
          detail::ContactPoint cp;
          if (detail::sphere_box_contact(tip, physics.fingertip_radius, o, cp) && cp.depth > tol) {
            return fail("fingertip intersects the obstacle");
          }
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace

// ---- public API -----------------------------------------------------------

std::string to_string(Family f) {
  switch (f) {
    case Family::pushing: return "pushing";
    case Family::picking: return "picking";
    case Family::pick_and_place: return "pick_and_place";
    case Family::stacking2: return "stacking2";
    case Family::towers: return "towers";
    case Family::stacked_blocks: return "stacked_blocks";
    case Family::creative_stacked_blocks: return "creative_stacked_blocks";
    case Family::general: return "general";
  }
  return "pushing";
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> f{Family::pushing,        Family::picking,
                                     Family::pick_and_place, Family::stacking2,
                                     Family::towers,         Family::stacked_blocks,
                                     Family::creative_stacked_blocks, Family::general};
  return f;
}

Family family_from_string(std::string_view s) {
  for (Family f : all_families()) {
    if (to_string(f) == s) return f;
  }
  throw TaskError("unknown task family '" + std::string(s) + "'");
}

bool has_free_block_count(Family f) { return structure_family(f); }

int episode_time_limit(int num_blocks, int control_rate_hz) {
  if (num_blocks < 1) throw TaskError("episode_time_limit needs at least one block");
  return num_blocks * 10 * control_rate_hz;
}

TaskInstance build_task(Family family, const TaskParams& params, std::uint64_t seed,
                        const VariableCatalog& cat, const PhysicsConstants& physics) {
  for (const auto& [key, value] : params) {
    if (key != "num_blocks" && key != "goal_height" && key != "tower_dims") {
      throw TaskError("unknown task parameter '" + key + "'");
    }
    if (!cat.spec(key).applies_to(to_string(family))) {
      throw TaskError("parameter '" + key + "' does not apply to " + to_string(family));
    }
    if (static_cast<int>(value.size()) != cat.spec(key).dims ||
        !within_admissible_range(cat, key, value)) {
      throw TaskError("parameter '" + key + "' lies outside its space");
    }
  }
  auto param = [&](const char* key) -> std::optional<Values> {
    const auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
  };

  Vec3 block_size = vec3(cat.spec("block.size").default_value);
  Vec3 dims = vec3(cat.spec("tower_dims").default_value);
  int n = 1;
  switch (family) {
    case Family::stacking2: n = 2; break;
    case Family::towers:
      block_size = Vec3::Constant(kTowerBlockEdge);
      if (auto d = param("tower_dims")) dims = vec3(*d);
      n = tower_count(dims, block_size);
      if (n < 1 || n > kMaxBlocks) throw TaskError("tower_dims yield an unsupported block count");
      break;
    case Family::stacked_blocks:
    case Family::creative_stacked_blocks: n = 4; break;
    case Family::general: n = 3; break;
    default: break;
  }
  if (auto v = param("num_blocks")) {
    const double want = v->at(0);
    if (want != std::floor(want)) throw TaskError("num_blocks must be an integer");
    if (!has_free_block_count(family) && static_cast<int>(want) != n) {
      throw TaskError(to_string(family) + " has a fixed block count of " + std::to_string(n));
    }
    n = static_cast<int>(want);
  }

  TaskInstance t;
  t.family = family;
  t.config = default_config(cat, family, n);
  for (int i = 0; i < n; ++i) {
    t.config.set(bid(i, "size"), values(block_size));
    t.config.set(gid(i, "size"), values(block_size));
  }
  if (family == Family::towers) t.config.set("tower_dims", values(dims));
  if (family == Family::pick_and_place) t.obstacles.push_back(obstacle());

  Rng rng(derive_seed(seed, fnv1a(to_string(family))));
  Structure goal;
  switch (family) {
    case Family::pushing:
    case Family::pick_and_place: goal = single_part(block_size, 0.5 * block_size.z()); break;
    case Family::picking: {
      const double h = param("goal_height") ? param("goal_height")->at(0) : t.config.scalar("goal_height");
      t.config.set("goal_height", {h});
      goal = single_part(block_size, h);
      break;
    }
    case Family::stacking2: goal = column({block_size, block_size}); break;
    case Family::towers: goal = tower(dims, block_size); break;
    case Family::stacked_blocks:
    case Family::creative_stacked_blocks: {
      const auto counts = level_counts(n, max_levels_for(cat, Space::A, block_size.z()), rng);
      goal = stable_stacked(counts, block_size, rng, physics);
      break;
    }
    case Family::general: {
      // Piles that tumbled apart, stand above space A or still creep are redrawn.
      const double top = cat.spec("goal.pose_cyl").intervals(Space::A)[2].hi;
      bool found = false;
      for (int attempt = 0; attempt < 30 && !found; ++attempt) {
        goal = settled(std::vector<Vec3>(n, block_size), rng, physics);
        found = true;
        for (const Vec3& p : goal.positions) found = found && p.z() < top && p.head<2>().norm() < kPileSpread;
        found = found && settle_displacement(structure_cuboids(goal), rng.next(), physics) <= kStableDrift;
      }
      if (!found) goal = stacked(level_counts(n, 1, rng), block_size, rng, false);
      break;
    }
  }
  std::map<std::string, Values> goal_values;
  place_structure(goal, default_anchor(family), goal_values);
  for (auto& [id, v] : goal_values) t.config.set(id, v);
  t.goal_tilt = goal.tilts;
  t.goal.imposed.assign(n, true);
  if (family == Family::creative_stacked_blocks) {
    const int last = *std::max_element(goal.levels.begin(), goal.levels.end());
    for (int j = 0; j < n; ++j) t.goal.imposed[j] = goal.levels[j] == 0 || goal.levels[j] == last;
  }

  // Blocks: fixed defaults for single-block families, floor grid otherwise.
  if (family == Family::picking) {
    t.config.set(bid(0, "pose_cyl"), {0.0, 0.0, 0.5 * block_size.z(), 0.0});
  } else if (n > 1 || structure_family(family)) {
    build_from_config(t);
    const auto spots = floor_spots(n, block_size, t.goal.parts, t.obstacles, physics.stage_radius);
    for (int i = 0; i < n; ++i) t.config.set(bid(i, "pose_cyl"), cyl_values(spots[i], 0.0));
  }
  build_from_config(t);
  t.episode_limit_steps = episode_time_limit(n, physics.control_rate_hz());

  if (auto r = check_structure(t, true, physics)) {
    throw TaskError("generated " + to_string(family) + " instance violates its family: " + r->detail);
  }
  return t;
}

Intervention complete_intervention(const TaskInstance& t, const Intervention& iv, const VariableCatalog&) {
  Intervention out = iv;
  auto& a = out.assignments;
  const int n = t.num_blocks();
  auto post = [&](const std::string& id) { return a.count(id) ? a.at(id) : t.config.get(id); };

  if (t.family == Family::picking) {
    if (assigned(iv, "goal_height") && !assigned(iv, gid(0, "pose_cyl"))) {
      Values pose = t.config.get(gid(0, "pose_cyl"));
      pose[2] = a.at("goal_height")[0];
      a[gid(0, "pose_cyl")] = pose;
    } else if (assigned(iv, gid(0, "pose_cyl")) && !assigned(iv, "goal_height")) {
      a["goal_height"] = {a.at(gid(0, "pose_cyl"))[2]};
    }
  }
  if (follows_block_size(t.family)) {
    for (int i = 0; i < n; ++i) {
      if (assigned(iv, bid(i, "size")) && !assigned(iv, gid(i, "size"))) a[gid(i, "size")] = a.at(bid(i, "size"));
    }
  }
  if (floor_goal_family(t.family)) {
    for (int j = 0; j < n; ++j) {
      if (a.count(gid(j, "size")) && !assigned(iv, gid(j, "pose_cyl"))) {
        Values pose = t.config.get(gid(j, "pose_cyl"));
        pose[2] = 0.5 * a.at(gid(j, "size"))[2];
        a[gid(j, "pose_cyl")] = pose;
      }
    }
  }
  const bool goal_size_changed = !indices_with_prefix(a, "goal.size").empty();
  if ((t.family == Family::stacking2 || t.family == Family::towers) && !any_goal_pose(iv, n) &&
      (goal_size_changed || assigned(iv, "tower_dims"))) {
    const Vec3 size = vec3(post(gid(0, "size")));
    bool uniform = true;
    for (int j = 0; j < n; ++j) uniform = uniform && vec3(post(gid(j, "size"))) == size;
    Structure s;
    bool ok = uniform;
    if (t.family == Family::towers) {
      const Vec3 dims = vec3(post("tower_dims"));
      ok = ok && tower_count(dims, size) == n;
      if (ok) s = tower(dims, size);
    } else if (ok) {
      s = column({size, size});
    }
    if (ok) {
      Anchor anchor;
      structure_of(t, anchor);
      // Re-center the new layout on the old one.
      Vec3 mean = Vec3::Zero();
      for (const Vec3& p : s.positions) mean += Vec3(p.x(), p.y(), 0.0);
      mean /= n;
      for (Vec3& p : s.positions) p -= mean;
      std::map<std::string, Values> layout;
      place_structure(s, anchor, layout);
      for (auto& [id, v] : layout) {
        if (!assigned(iv, id)) a[id] = v;
      }
    }
  }
  return out;
}

std::variant<TaskInstance, Rejection> intervene(const TaskInstance& task, const Intervention& iv,
                                                const InterveneOptions& options,
                                                const VariableCatalog& cat,
                                                const PhysicsConstants& physics) {
  for (const auto& [id, value] : iv.assignments) {
    if (!task.config.has(id)) throw CatalogError("variable '" + id + "' is not exposed by this environment");
    if (static_cast<int>(value.size()) != cat.spec(id).dims) {
      throw ConfigError("variable '" + id + "' expects " + std::to_string(cat.spec(id).dims) + " values");
    }
  }
  const Intervention full = options.complete ? complete_intervention(task, iv, cat) : iv;
  ApplyResult applied = apply_intervention(cat, task.config, full);
  if (auto* r = std::get_if<Rejection>(&applied)) return *r;

  TaskInstance t = task;
  t.config = std::get<EnvConfig>(std::move(applied));
  const int n = t.num_blocks();
  if (full.assignments.count("num_blocks") && t.config.scalar("num_blocks") != n) {
    return Rejection{RejectCode::family_block_count, "the block count of a live task cannot change"};
  }

  const std::set<int> blocks_touched = indices_with_prefix(full.assignments, "block.");
  const std::set<int> goals_touched = indices_with_prefix(full.assignments, "goal.");
  for (int i : blocks_touched) {
    Cuboid& b = t.blocks[i];
    const Cuboid old = b;
    b.size = vec3(t.config.get(bid(i, "size")));
    b.mass = t.config.scalar(bid(i, "mass"));
    b.color = vec3(t.config.get(bid(i, "color")));
    if (full.assignments.count(bid(i, "pose_cyl"))) {
      b.pose = pose_of(t.config.get(bid(i, "pose_cyl")));
    } else if (full.assignments.count(bid(i, "size")) && b.size != old.size) {
      // Rescaled about its center, then dropped to 1 mm above its old contact level.
      b.pose.position.z() += old.lowest_z() - b.lowest_z() + 0.001;
      t.config.set(bid(i, "pose_cyl"), cyl_values(b.pose.position, yaw_of(b.pose.orientation)));
    }
  }
  rebuild_goal(t, goals_touched);

  const bool goal_changed = !goals_touched.empty() || full.assignments.count("tower_dims") ||
                            full.assignments.count("goal_height");
  if (auto r = check_structure(t, goal_changed, physics)) return *r;
  std::set<int> moved;
  for (int i : blocks_touched) {
    if (full.assignments.count(bid(i, "pose_cyl")) || full.assignments.count(bid(i, "size"))) moved.insert(i);
  }
  if (auto r = check_state(t, moved, full.assignments.count("joint_positions") > 0, physics)) return *r;
  return t;
}

std::optional<Rejection> validate_intervention(const TaskInstance& task, const Intervention& iv,
                                               const VariableCatalog& cat, const PhysicsConstants& physics) {
  auto r = intervene(task, iv, {}, cat, physics);
  if (auto* rej = std::get_if<Rejection>(&r)) return *rej;
  return std::nullopt;
}

TaskInstance with_config(const TaskInstance& task, const EnvConfig& config, const VariableCatalog& cat,
                         const PhysicsConstants& physics) {
  config.require_complete(task.config.ids());
  if (config.size() != task.config.size()) throw ConfigError("config carries variables this task does not expose");
  Intervention diff;
  for (const auto& [id, v] : config.values()) {
    if (task.config.get(id) != v) diff.assignments[id] = v;
  }
  InterveneOptions literal;
  literal.complete = false;
  auto r = intervene(task, diff, literal, cat, physics);
  if (auto* rej = std::get_if<Rejection>(&r)) {
    throw ConfigError("config is not valid for " + to_string(task.family) + ": " + rej->detail);
  }
  return std::get<TaskInstance>(std::move(r));
}

// ---- sampling -------------------------------------------------------------

namespace {

bool cyl_in_space(const VariableCatalog& cat, const std::string& id, const Values& v, Space s,
                  const EnvConfig& ctx) {
  return space_membership(cat, id, v, s, &ctx);
}

/// Draws an anchor until every placed part lies in `space`, inside the stage
/// and clear of obstacles. Returns false when no draw succeeded.
bool place_in_space(const TaskInstance& t, const Structure& s, Space space, Rng& rng,
                    const VariableCatalog& cat, const PhysicsConstants& physics,
                    std::map<std::string, Values>& out) {
  const auto& iv = cat.spec("goal.pose_cyl").intervals(space);
  EnvConfig ctx = t.config;
  for (std::size_t j = 0; j < s.sizes.size(); ++j) ctx.set(gid(static_cast<int>(j), "size"), values(s.sizes[j]));
  for (int attempt = 0; attempt < 2000; ++attempt) {
    Anchor a;
    a.radius = rng.uniform(iv[0].lo, iv[0].hi);
    a.azimuth = rng.uniform(iv[1].lo, iv[1].hi);
    a.yaw = rng.uniform(iv[3].lo, iv[3].hi);
    std::map<std::string, Values> candidate;
    place_structure(s, a, candidate);
    bool ok = true;
    for (std::size_t j = 0; j < s.positions.size() && ok; ++j) {
      const int jj = static_cast<int>(j);
      const Values& cyl = candidate.at(gid(jj, "pose_cyl"));
      ok = cyl_in_space(cat, gid(jj, "pose_cyl"), cyl, space, ctx);
      Cuboid part;
      part.pose = pose_of(cyl);
      part.pose.orientation = (part.pose.orientation * s.tilts[j]).normalized();
      part.size = s.sizes[j];
      ok = ok && inside_stage(part, physics.stage_radius, kWallMargin);
      for (const Cuboid& o : t.obstacles) {
        ok = ok && !footprints_overlap(part, o, 0.01);
      }
      if (ok && t.family == Family::pick_and_place) {
        // Goal on the side of the obstacle opposite the block.
        ok = part.pose.position.y() * t.blocks[0].pose.position.y() < 0.0;
      }
    }
    if (ok) {
      out = std::move(candidate);
      return true;
    }
  }
  return false;
}

}  // namespace

Intervention sample_goal_intervention(const TaskInstance& t, Space space, std::uint64_t seed,
                                      const VariableCatalog& cat, const PhysicsConstants& physics) {
  Rng rng(derive_seed(seed, fnv1a("goal")));
  const int n = t.num_blocks();
  std::vector<Vec3> sizes;
  for (int j = 0; j < n; ++j) sizes.push_back(vec3(t.config.get(gid(j, "size"))));
  Intervention iv;
  Structure s;
  switch (t.family) {
    case Family::pushing:
    case Family::pick_and_place: s = single_part(sizes[0], 0.5 * sizes[0].z()); break;
    case Family::picking: {
      const auto& gh = cat.spec("goal_height").intervals(space)[0];
      const auto& pz = cat.spec("goal.pose_cyl").intervals(space)[2];
      const double lo = std::max(gh.lo, 0.5 * sizes[0].z());
      const double hi = std::min(gh.hi, pz.hi);
      const double h = rng.uniform(lo, hi);
      s = single_part(sizes[0], h);
      iv.assignments["goal_height"] = {h};
      break;
    }
    case Family::stacking2: s = column({sizes[0], sizes[1]}); break;
    case Family::towers: s = tower(vec3(t.config.get("tower_dims")), sizes[0]); break;
    case Family::stacked_blocks: {
      const auto counts = level_counts(n, max_levels_for(cat, space, sizes[0].z()), rng);
      s = stable_stacked(counts, sizes[0], rng, physics);
      break;
    }
    case Family::creative_stacked_blocks: {
      // Keep the level split so that the imposed levels stay the same parts.
      std::vector<int> counts;
      for (int j = 0; j < n; ++j) {
        const double z = t.config.get(gid(j, "pose_cyl"))[2];
        const int level = static_cast<int>(std::lround(z / sizes[j].z() - 0.5));
        if (static_cast<int>(counts.size()) <= level) counts.resize(level + 1, 0);
        ++counts[level];
      }
      s = stable_stacked(counts, sizes[0], rng, physics);
      break;
    }
    case Family::general: {
      Anchor ignored;
      s = structure_of(t, ignored);
      // A cube edge changed through the config scales the settled shape as a whole.
      const double k = s.sizes[0].x() / t.goal.parts[0].size.x();
      if (k != 1.0) {
        for (Vec3& p : s.positions) p *= k;
      }
      break;
    }
  }
  if (t.family != Family::general) {
    // Center the structure's footprint on its anchor.
    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : s.positions) mean += Vec3(p.x(), p.y(), 0.0);
    mean /= static_cast<double>(s.positions.size());
    for (Vec3& p : s.positions) p -= mean;
  }
  std::map<std::string, Values> placed;
  if (!place_in_space(t, s, space, rng, cat, physics, placed)) return Intervention{};
  for (auto& [id, v] : placed) {
    if (id.size() > 5 && id.compare(id.size() - 5, 5, ".size") == 0 &&
        t.config.get(id) == v) {
      continue;  // sizes are kept
    }
    iv.assignments[id] = v;
  }
  if (t.family == Family::picking) iv.assignments["goal_height"] = {placed.at(gid(0, "pose_cyl"))[2]};
  return iv;
}

GoalShape sample_goal(const TaskInstance& t, Space space, std::uint64_t seed, const VariableCatalog& cat,
                      const PhysicsConstants& physics) {
  auto r = intervene(t, sample_goal_intervention(t, space, seed, cat, physics), {}, cat, physics);
  if (auto* rej = std::get_if<Rejection>(&r)) {
    throw TaskError("sampled goal was rejected: " + rej->detail);
  }
  return std::get<TaskInstance>(r).goal;
}

Intervention sample_variables(const TaskInstance& t, const std::set<std::string>& ids, Space space,
                              std::uint64_t seed, const VariableCatalog& cat, const PhysicsConstants& physics) {
  for (const std::string& id : ids) {
    if (!t.config.has(id)) throw CatalogError("variable '" + id + "' is not exposed by this environment");
  }
  const int n = t.num_blocks();
  Intervention out;
  auto& a = out.assignments;
  auto listed = [&](const std::string& id) { return ids.count(id) > 0; };
  auto stream = [&](const std::string& name) { return derive_seed(seed, fnv1a(name)); };

  // Variables without family coupling.
  std::set<std::string> plain;
  for (const std::string& id : ids) {
    const auto [tmpl, idx] = split_instance_id(id);
    if (tmpl == "block.mass" || tmpl == "block.color" || tmpl == "goal.color" || tmpl == "link.mass" ||
        tmpl == "link.color" || tmpl == "gravity_z" || tmpl == "floor_friction" ||
        tmpl == "stage_friction" || tmpl == "stage_color" || tmpl == "floor_color") {
      plain.insert(id);
    }
  }
  for (auto& [id, v] : sample_intervention(cat, plain, space, seed).assignments) a[id] = v;

  if (listed("num_blocks") && space_membership(cat, "num_blocks", {static_cast<double>(n)}, space)) {
    a["num_blocks"] = {static_cast<double>(n)};
  }

  // Sizes. Multi-block families share one size so that their goals stay buildable.
  TaskInstance work = t;
  bool sizes_listed = false;
  for (int i = 0; i < n; ++i) sizes_listed = sizes_listed || listed(bid(i, "size"));
  const bool shared = n > 1 || t.family == Family::towers || t.family == Family::general;
  const bool dims_listed = t.family == Family::towers && listed("tower_dims");
  if (sizes_listed || dims_listed) {
    Rng rng(stream("size"));
    const auto& siv = cat.spec("block.size").intervals(space);
    const auto& div = cat.spec("tower_dims").intervals(space);
    auto draw = [&](const std::vector<Interval>& iv) {
      return Vec3(rng.uniform(iv[0].lo, iv[0].hi), rng.uniform(iv[1].lo, iv[1].hi), rng.uniform(iv[2].lo, iv[2].hi));
    };
    bool found = false;
    std::vector<Vec3> sizes;
    Vec3 dims = t.family == Family::towers ? vec3(t.config.get("tower_dims")) : Vec3::Zero();
    for (int attempt = 0; attempt < 500 && !found; ++attempt) {
      sizes.clear();
      if (shared) {
        Vec3 s = sizes_listed ? draw(siv) : vec3(t.config.get(bid(0, "size")));
        if (sizes_listed && t.family == Family::general) {
          // Settled shapes can only be rescaled as a whole: one cube edge.
          const double lo = std::max({siv[0].lo, siv[1].lo, siv[2].lo});
          const double hi = std::min({siv[0].hi, siv[1].hi, siv[2].hi});
          s = Vec3::Constant(rng.uniform(lo, hi));
        }
        sizes.assign(n, s);
      } else {
        for (int i = 0; i < n; ++i) sizes.push_back(listed(bid(i, "size")) ? draw(siv) : vec3(t.config.get(bid(i, "size"))));
      }
      if (dims_listed) dims = draw(div);
      found = t.family != Family::towers || tower_count(dims, sizes[0]) == n;
    }
    if (found) {
      for (int i = 0; i < n; ++i) {
        if (sizes_listed && (shared || listed(bid(i, "size")))) {
          a[bid(i, "size")] = values(sizes[i]);
          work.config.set(bid(i, "size"), values(sizes[i]));
          work.blocks[i].size = sizes[i];
          work.config.set(gid(i, "size"), values(sizes[i]));
          if (listed(gid(i, "size"))) a[gid(i, "size")] = values(sizes[i]);
        }
      }
      if (dims_listed) {
        a["tower_dims"] = values(dims);
        work.config.set("tower_dims", values(dims));
      }
    }
  }

  // Goal: a fresh member of the family whenever any goal placement is listed
  // or the shared size changed under a structured goal.
  bool goal_listed = listed("goal_height") || (dims_listed && a.count("tower_dims"));
  for (int j = 0; j < n; ++j) goal_listed = goal_listed || listed(gid(j, "pose_cyl"));
  const bool sizes_changed = sizes_listed && a.count(bid(0, "size"));
  if (sizes_changed && t.family != Family::pushing &&
      t.family != Family::picking && t.family != Family::pick_and_place) {
    goal_listed = true;
  }
  if (goal_listed) {
    const Intervention g = sample_goal_intervention(work, space, stream("goal"), cat, physics);
    for (const auto& [id, v] : g.assignments) {
      a[id] = v;
      work.config.set(id, v);
    }
    for (int j = 0; j < n; ++j) {
      work.goal.parts[j] = goal_from_config(work.config, j, work.goal_tilt[j]);
    }
  } else if (sizes_changed && floor_goal_family(t.family)) {
    for (int j = 0; j < n; ++j) {
      Values pose = work.config.get(gid(j, "pose_cyl"));
      pose[2] = 0.5 * work.config.get(gid(j, "size"))[2];
      a[gid(j, "pose_cyl")] = pose;
      work.config.set(gid(j, "pose_cyl"), pose);
    }
  }

  // Joint targets are drawn before blocks so that placements can avoid the tips.
  const double tip_r = physics.fingertip_radius;
  JointVector q;
  {
    const Values qv = work.config.get("joint_positions");
    for (int k = 0; k < 9; ++k) q[k] = qv[k];
  }
  auto tips_clear = [&](const JointVector& joints, const std::vector<Cuboid>& boxes) {
    const auto tips = forward_kinematics(joints, physics);
    for (const Vec3& tip : tips) {
      if (tip.z() < tip_r + 0.005) return false;
      for (const Cuboid& b : boxes) {
        detail::ContactPoint cp;
        Cuboid inflated = b;
        inflated.size += Vec3::Constant(0.01);
        if (detail::sphere_box_contact(tip, tip_r, inflated, cp)) return false;
      }
    }
    return true;
  };
  if (listed("joint_positions")) {
    Rng rng(stream("joints"));
    const auto& jiv = cat.spec("joint_positions").intervals(space);
    std::vector<Cuboid> fixed = work.obstacles;
    for (int i = 0; i < n; ++i) {
      if (!listed(bid(i, "pose_cyl"))) fixed.push_back(work.blocks[i]);
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
      JointVector cand;
      for (int k = 0; k < 9; ++k) cand[k] = rng.uniform(jiv[k].lo, jiv[k].hi);
      if (tips_clear(cand, fixed)) {
        q = cand;
        a["joint_positions"] = Values(q.data(), q.data() + 9);
        break;
      }
    }
  }

  // Block placements on the floor.
  {
    Rng rng(stream("block_pose"));
    const auto& piv = cat.spec("block.pose_cyl").intervals(space);
    std::vector<int> order;
    for (int i = 0; i < n; ++i) {
      if (listed(bid(i, "pose_cyl"))) order.push_back(i);
    }
    std::vector<bool> placed(n, true);
    for (int i : order) placed[i] = false;
    const double goal_side = t.family == Family::pick_and_place ? work.goal.parts[0].pose.position.y() : 0.0;
    for (int i : order) {
      Cuboid b = work.blocks[i];
      b.size = vec3(work.config.get(bid(i, "size")));
      for (int attempt = 0; attempt < 2000; ++attempt) {
        const Values cyl{rng.uniform(piv[0].lo, piv[0].hi), rng.uniform(piv[1].lo, piv[1].hi), 0.5 * b.size.z(),
                         rng.uniform(piv[3].lo, piv[3].hi)};
        b.pose = pose_of(cyl);
        if (!inside_stage(b, physics.stage_radius, kWallMargin)) continue;
        if (goal_side != 0.0 && b.pose.position.y() * goal_side >= 0.0) continue;
        bool clear = true;
        for (const Cuboid& o : work.obstacles) clear = clear && !footprints_overlap(b, o, 0.01);
        for (int k = 0; k < n && clear; ++k) {
          if (k == i || !placed[k]) continue;
          clear = !footprints_overlap(b, work.blocks[k], 0.005);
        }
        if (!clear || !tips_clear(q, {b})) continue;
        a[bid(i, "pose_cyl")] = cyl;
        work.blocks[i] = b;
        placed[i] = true;
        break;
      }
    }
  }
  return out;
}

// ---- serialization --------------------------------------------------------

nlohmann::json to_json(const TaskInstance& t) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const Cuboid& b : t.blocks) blocks.push_back(to_json(b));
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Cuboid& o : t.obstacles) obstacles.push_back(to_json(o));
  nlohmann::json tilt = nlohmann::json::array();
  for (const Quat& q : t.goal_tilt) tilt.push_back({q.w(), q.x(), q.y(), q.z()});
  return {{"family", to_string(t.family)},
          {"blocks", blocks},
          {"obstacles", obstacles},
          {"goal", to_json(t.goal)},
          {"goal_tilt", tilt},
          {"episode_limit_steps", t.episode_limit_steps},
          {"config", to_json(t.config)}};
}

TaskInstance task_from_json(const nlohmann::json& j, const VariableCatalog&, const PhysicsConstants&) {
  try {
    TaskInstance t;
    t.family = family_from_string(j.at("family").get<std::string>());
    t.config = config_from_json(j.at("config"));
    for (const auto& b : j.at("blocks")) t.blocks.push_back(cuboid_from_json(b));
    for (const auto& o : j.value("obstacles", nlohmann::json::array())) t.obstacles.push_back(cuboid_from_json(o));
    t.goal = goal_from_json(j.at("goal"));
    for (const auto& q : j.value("goal_tilt", nlohmann::json::array())) {
      const auto v = q.get<std::array<double, 4>>();
      t.goal_tilt.push_back(Quat(v[0], v[1], v[2], v[3]));
    }
    if (t.goal_tilt.size() != t.goal.parts.size()) t.goal_tilt.assign(t.goal.parts.size(), Quat::Identity());
    t.episode_limit_steps = j.at("episode_limit_steps").get<int>();
    if (static_cast<int>(t.config.scalar("num_blocks")) != t.num_blocks()) {
      throw ConfigError("task document: num_blocks disagrees with the block list");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task document: ") + e.what());
  }
}

}  // namespace blockbench
