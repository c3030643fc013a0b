#include "blockbench/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blockbench {

std::array<Vec3, 8> Cuboid::corners() const {
  std::array<Vec3, 8> out;
  const Vec3 h = half();
  const Mat3 r = pose.orientation.toRotationMatrix();
  for (int i = 0; i < 8; ++i) {
    const Vec3 local((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
    out[i] = pose.position + r * local;
  }
  return out;
}

bool Cuboid::contains(const Vec3& p, double tol) const {
  const Vec3 local = pose.inverse_apply(p);
  const Vec3 h = half();
  return std::abs(local.x()) <= h.x() + tol && std::abs(local.y()) <= h.y() + tol &&
         std::abs(local.z()) <= h.z() + tol;
}

double Cuboid::lowest_z() const {
  double z = pose.position.z();
  const Mat3 r = pose.orientation.toRotationMatrix();
  // Support in -z direction: sum of |r_zi| * h_i.
  const Vec3 h = half();
  z -= std::abs(r(2, 0)) * h.x() + std::abs(r(2, 1)) * h.y() + std::abs(r(2, 2)) * h.z();
  return z;
}

std::vector<Cuboid> GoalShape::imposed_parts() const {
  std::vector<Cuboid> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i >= imposed.size() || imposed[i]) out.push_back(parts[i]);
  }
  return out;
}

namespace {

using Polygon = std::vector<Vec3>;

struct Polyhedron {
  std::vector<Polygon> faces;  // counter-clockwise seen from outside
};

Polyhedron box_polyhedron(const Cuboid& c, const Vec3& origin) {
  Polyhedron poly;
  const Mat3 r = c.pose.orientation.toRotationMatrix();
  const Vec3 center = c.pose.position - origin;
  const Vec3 h = c.half();
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3;
    const int a2 = (axis + 2) % 3;
    for (double sign : {1.0, -1.0}) {
      const Vec3 n = sign * r.col(axis);
      // t1 x t2 = n keeps the winding counter-clockwise around the normal.
      const Vec3 t1 = r.col(a1) * h[a1];
      const Vec3 t2 = sign * r.col(a2) * h[a2];
      const Vec3 fc = center + n * h[axis];
      poly.faces.push_back({fc - t1 - t2, fc + t1 - t2, fc + t1 + t2, fc - t1 + t2});
    }
  }
  return poly;
}

// Keeps the part of `poly` with n·x <= d and closes the cut with a cap face.
void clip(Polyhedron& poly, const Vec3& n, double d) {
  constexpr double kEps = 1e-13;
  bool any_outside = false;
  bool any_inside = false;
  for (const Polygon& face : poly.faces) {
    for (const Vec3& p : face) {
      const double dp = n.dot(p) - d;
      any_outside |= dp > kEps;
      any_inside |= dp < -kEps;
    }
  }
  if (!any_outside) return;
  if (!any_inside) {
    poly.faces.clear();
    return;
  }
  std::vector<Vec3> cap;
  std::vector<Polygon> kept;
  kept.reserve(poly.faces.size() + 1);
  for (const Polygon& face : poly.faces) {
    Polygon out;
    const std::size_t m = face.size();
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3& p = face[i];
      const Vec3& q = face[(i + 1) % m];
      const double dp = n.dot(p) - d;
      const double dq = n.dot(q) - d;
      if (dp <= kEps) {
        out.push_back(p);
        if (dp >= -kEps) cap.push_back(p);
      }
      if ((dp < -kEps && dq > kEps) || (dp > kEps && dq < -kEps)) {
        const double t = dp / (dp - dq);
        const Vec3 x = p + t * (q - p);
        out.push_back(x);
        cap.push_back(x);
      }
    }
    if (out.size() >= 3) kept.push_back(std::move(out));
  }
  if (cap.size() >= 3) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& p : cap) centroid += p;
    centroid /= static_cast<double>(cap.size());
    const Vec3 u = n.unitOrthogonal();
    const Vec3 v = n.cross(u);
    std::vector<std::pair<double, Vec3>> keyed;
    keyed.reserve(cap.size());
    for (const auto& p : cap) {
      const Vec3 w = p - centroid;
      keyed.emplace_back(std::atan2(w.dot(v), w.dot(u)), p);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    Polygon face;
    face.reserve(keyed.size());
    for (const auto& [_, p] : keyed) face.push_back(p);
    kept.push_back(std::move(face));
  }
  poly.faces = std::move(kept);
}

double polyhedron_volume(const Polyhedron& poly) {
  double six_v = 0.0;
  for (const Polygon& f : poly.faces) {
    for (std::size_t i = 1; i + 1 < f.size(); ++i) {
      six_v += f[0].dot(f[i].cross(f[i + 1]));
    }
  }
  return six_v / 6.0;
}

std::array<double, 10> ordering_key(const Cuboid& c) {
  const auto& p = c.pose.position;
  const auto& q = c.pose.orientation;
  return {p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z(), c.size.x(), c.size.y(), c.size.z()};
}

double clipped_volume(const Cuboid& a, const Cuboid& b) {
  // Work relative to b's center so the divergence sum stays well conditioned.
  const Vec3 origin = b.pose.position;
  Polyhedron poly = box_polyhedron(a, origin);
  const Mat3 rb = b.pose.orientation.toRotationMatrix();
  const Vec3 hb = b.half();
  for (int axis = 0; axis < 3 && !poly.faces.empty(); ++axis) {
    for (double sign : {1.0, -1.0}) {
      clip(poly, sign * rb.col(axis), hb[axis]);
      if (poly.faces.empty()) break;
    }
  }
  return std::max(0.0, polyhedron_volume(poly));
}

}  // namespace

double box_pair_overlap(const Cuboid& a, const Cuboid& b) {
  // Quick reject on bounding spheres.
  const double ra = a.half().norm();
  const double rb = b.half().norm();
  if ((a.pose.position - b.pose.position).squaredNorm() >= (ra + rb) * (ra + rb)) return 0.0;
  const auto ka = ordering_key(a);
  const auto kb = ordering_key(b);
  const double v = std::lexicographical_compare(kb.begin(), kb.end(), ka.begin(), ka.end())
                       ? clipped_volume(b, a)
                       : clipped_volume(a, b);
  return std::min({v, a.volume(), b.volume()});
}

namespace {

struct LocalBox {
  Mat3 to_box;  // frame coordinates -> box coordinates
  Vec3 center;  // in frame coordinates
  Vec3 half;

  bool contains(const Vec3& p) const {
    const Vec3 l = to_box * (p - center);
    return std::abs(l.x()) <= half.x() && std::abs(l.y()) <= half.y() && std::abs(l.z()) <= half.z();
  }

  // Whether the ball of radius r around p is inside (1), outside (-1) or
  // crosses the boundary (0).
  int classify(const Vec3& p, double r) const {
    const Vec3 q = (to_box * (p - center)).cwiseAbs() - half;
    const double inner = q.maxCoeff();
    if (inner <= -r) return 1;
    if (q.cwiseMax(0.0).norm() >= r) return -1;
    return 0;
  }
};

int classify_union(const std::vector<LocalBox>& boxes, const Vec3& p, double r) {
  int status = -1;
  for (const auto& b : boxes) {
    const int c = b.classify(p, r);
    if (c == 1) return 1;
    status = std::max(status, c);
  }
  return status;
}

bool in_union(const std::vector<LocalBox>& boxes, const Vec3& p) {
  for (const auto& b : boxes) {
    if (b.contains(p)) return true;
  }
  return false;
}

LocalBox to_frame(const Cuboid& c, const Pose& frame) {
  const Quat rel = frame.orientation.conjugate() * c.pose.orientation;
  return {rel.toRotationMatrix().transpose(), frame.inverse_apply(c.pose.position), c.half()};
}

}  // namespace

double fractional_overlap(std::span<const Cuboid> blocks, const GoalShape& goal,
                          const OverlapOptions& options) {
  const std::vector<Cuboid> parts = goal.imposed_parts();
  if (parts.empty()) throw MetricUndefined("goal shape has no imposed parts");
  if (blocks.empty()) return 0.0;

  if (options.exact_fast_path && parts.size() == 1 && blocks.size() == 1) {
    const Cuboid& g = parts.front();
    const Cuboid& b = blocks.front();
    const auto gc = g.corners();
    if (std::all_of(gc.begin(), gc.end(), [&](const Vec3& p) { return b.contains(p, 1e-12); })) {
      return 1.0;
    }
    return std::clamp(box_pair_overlap(b, g) / g.volume(), 0.0, 1.0);
  }

  // Voxel grid in the frame of the first imposed part, covering the imposed
  // parts' bounding box there.
  const Pose frame = parts.front().pose;
  std::vector<LocalBox> goal_boxes;
  std::vector<LocalBox> block_boxes;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : parts) {
    goal_boxes.push_back(to_frame(p, frame));
    for (const auto& c : p.corners()) {
      const Vec3 l = frame.inverse_apply(c);
      lo = lo.cwiseMin(l);
      hi = hi.cwiseMax(l);
    }
  }
  for (const auto& b : blocks) block_boxes.push_back(to_frame(b, frame));

  // Per-axis edges no larger than requested that tile the box exactly; a grid
  // overhanging the aligned part's faces would count whole boundary layers.
  std::array<long, 3> n{};
  Vec3 edge;
  Vec3 start;
  for (int i = 0; i < 3; ++i) {
    const double extent = hi[i] - lo[i];
    n[i] = std::max(1L, static_cast<long>(std::ceil(extent / options.voxel_edge - 1e-9)));
    edge[i] = extent / static_cast<double>(n[i]);
    start[i] = lo[i] + 0.5 * edge[i];
  }

  // Voxels straddling a box boundary are resolved by a regular sub-grid;
  // counts are kept in sub-voxel units so full coverage stays exact.
  constexpr int kSub = 4;
  constexpr long kWhole = kSub * kSub * kSub;
  const double radius = 0.5 * edge.norm();
  long goal_count = 0;
  long covered = 0;
  Vec3 p;
  for (long k = 0; k < n[2]; ++k) {
    p.z() = start.z() + static_cast<double>(k) * edge.z();
    for (long j = 0; j < n[1]; ++j) {
      p.y() = start.y() + static_cast<double>(j) * edge.y();
      for (long i = 0; i < n[0]; ++i) {
        p.x() = start.x() + static_cast<double>(i) * edge.x();
        const int g = classify_union(goal_boxes, p, radius);
        if (g == -1) continue;
        const int b = classify_union(block_boxes, p, radius);
        if (g == 1 && b != 0) {
          goal_count += kWhole;
          if (b == 1) covered += kWhole;
          continue;
        }
        for (int sz = 0; sz < kSub; ++sz) {
          for (int sy = 0; sy < kSub; ++sy) {
            for (int sx = 0; sx < kSub; ++sx) {
              const Vec3 offset((sx + 0.5) / kSub - 0.5, (sy + 0.5) / kSub - 0.5, (sz + 0.5) / kSub - 0.5);
              const Vec3 q = p + offset.cwiseProduct(edge);
              if (g != 1 && !in_union(goal_boxes, q)) continue;
              ++goal_count;
              if (b == 1 || (b == 0 && in_union(block_boxes, q))) ++covered;
            }
          }
        }
      }
    }
  }
  if (goal_count == 0) throw MetricUndefined("goal shape is smaller than one voxel");
  if (covered == goal_count) return 1.0;
  return static_cast<double>(covered) / static_cast<double>(goal_count);
}

nlohmann::json to_json(const Pose& p) {
  const auto& q = p.orientation;
  return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  const auto pos = j.at("position").get<std::array<double, 3>>();
  p.position = Vec3(pos[0], pos[1], pos[2]);
  if (j.contains("orientation")) {
    const auto q = j.at("orientation").get<std::array<double, 4>>();
    p.orientation = Quat(q[0], q[1], q[2], q[3]);
    const double norm = p.orientation.norm();
    if (!(norm > 0.0)) throw ConfigError("pose orientation has zero norm");
    if (std::abs(norm - 1.0) > 1e-9) p.orientation.normalize();
  }
  return p;
}

nlohmann::json to_json(const Cuboid& c) {
  return {{"pose", to_json(c.pose)},
          {"size", {c.size.x(), c.size.y(), c.size.z()}},
          {"mass", c.mass},
          {"color", {c.color.x(), c.color.y(), c.color.z()}}};
}

Cuboid cuboid_from_json(const nlohmann::json& j) {
  Cuboid c;
  c.pose = pose_from_json(j.at("pose"));
  const auto s = j.at("size").get<std::array<double, 3>>();
  c.size = Vec3(s[0], s[1], s[2]);
  if (!(c.size.minCoeff() > 0.0)) throw ConfigError("cuboid size must be positive");
  c.mass = j.value("mass", 0.0);
  if (j.contains("color")) {
    const auto col = j.at("color").get<std::array<double, 3>>();
    c.color = Vec3(col[0], col[1], col[2]);
  }
  return c;
}

nlohmann::json to_json(const GoalShape& g) {
  auto parts = nlohmann::json::array();
  for (std::size_t i = 0; i < g.parts.size(); ++i) {
    auto p = to_json(g.parts[i]);
    p["imposed"] = i < g.imposed.size() ? static_cast<bool>(g.imposed[i]) : true;
    parts.push_back(std::move(p));
  }
  return parts;
}

GoalShape goal_from_json(const nlohmann::json& j) {
  GoalShape g;
  for (const auto& p : j) {
    g.parts.push_back(cuboid_from_json(p));
    g.imposed.push_back(p.value("imposed", true));
  }
  return g;
}

}  // namespace blockbench
