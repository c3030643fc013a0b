#include "contact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace blockbench::detail {

namespace {

struct BoxFrame {
  Vec3 c;
  Mat3 r;  // columns are the box axes
  Vec3 h;
};

BoxFrame frame(const Cuboid& b) {
  return {b.pose.position, b.pose.orientation.toRotationMatrix(), b.half()};
}

double radius_along(const BoxFrame& b, const Vec3& axis) {
  return b.h.x() * std::abs(axis.dot(b.r.col(0))) + b.h.y() * std::abs(axis.dot(b.r.col(1))) +
         b.h.z() * std::abs(axis.dot(b.r.col(2)));
}

struct Axis {
  int kind = -1;  // 0: face of a, 1: face of b, 2: edge pair
  int i = 0;
  int j = 0;
  double overlap = std::numeric_limits<double>::infinity();
  Vec3 n = Vec3::Zero();  // points from b to a
};

// Separating-axis search. Returns false when the boxes are apart. Face axes are
// preferred over edge axes unless an edge axis is clearly shallower.
bool best_axis(const BoxFrame& a, const BoxFrame& b, Axis& face, Axis& edge) {
  const Vec3 d = a.c - b.c;
  auto test = [&](const Vec3& axis_raw, int kind, int i, int j, Axis& best) {
    const double len = axis_raw.norm();
    if (len < 1e-9) return true;
    const Vec3 axis = axis_raw / len;
    const double dist = d.dot(axis);
    const double overlap = radius_along(a, axis) + radius_along(b, axis) - std::abs(dist);
    if (overlap < 0.0) return false;
    if (overlap < best.overlap) {
      best.kind = kind;
      best.i = i;
      best.j = j;
      best.overlap = overlap;
      best.n = dist >= 0.0 ? axis : Vec3(-axis);
    }
    return true;
  };
  for (int i = 0; i < 3; ++i) {
    if (!test(a.r.col(i), 0, i, 0, face)) return false;
  }
  for (int i = 0; i < 3; ++i) {
    if (!test(b.r.col(i), 1, i, 0, face)) return false;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (!test(a.r.col(i).cross(b.r.col(j)), 2, i, j, edge)) return false;
    }
  }
  return true;
}

using Poly = std::vector<Vec3>;

// Keeps the part of a convex polygon with s·p <= lim.
Poly clip_polygon(const Poly& in, const Vec3& s, double lim) {
  Poly out;
  const std::size_t n = in.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3& p = in[k];
    const Vec3& q = in[(k + 1) % n];
    const double dp = s.dot(p) - lim;
    const double dq = s.dot(q) - lim;
    if (dp <= 0.0) out.push_back(p);
    if ((dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0)) {
      out.push_back(p + (q - p) * (dp / (dp - dq)));
    }
  }
  return out;
}

void face_contacts(const BoxFrame& ref, int ref_axis, const Vec3& ref_normal, const BoxFrame& inc,
                   const Vec3& normal_for_a, std::vector<ContactPoint>& out) {
  // Incident face: the face of `inc` most anti-parallel to the reference normal.
  int inc_axis = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i) {
    const double v = std::abs(inc.r.col(i).dot(ref_normal));
    if (v > best) {
      best = v;
      inc_axis = i;
    }
  }
  const double sign = inc.r.col(inc_axis).dot(ref_normal) > 0.0 ? -1.0 : 1.0;
  const int a1 = (inc_axis + 1) % 3;
  const int a2 = (inc_axis + 2) % 3;
  const Vec3 fc = inc.c + sign * inc.h[inc_axis] * inc.r.col(inc_axis);
  const Vec3 t1 = inc.h[a1] * inc.r.col(a1);
  const Vec3 t2 = inc.h[a2] * inc.r.col(a2);
  Poly poly{fc - t1 - t2, fc + t1 - t2, fc + t1 + t2, fc - t1 + t2};

  for (int k = 1; k <= 2 && !poly.empty(); ++k) {
    const int ax = (ref_axis + k) % 3;
    const Vec3 s = ref.r.col(ax);
    const double c = s.dot(ref.c);
    poly = clip_polygon(poly, s, c + ref.h[ax]);
    if (poly.empty()) break;
    poly = clip_polygon(poly, -s, -c + ref.h[ax]);
  }
  const double face_level = ref_normal.dot(ref.c) + ref.h[ref_axis];
  for (const Vec3& p : poly) {
    const double depth = face_level - ref_normal.dot(p);
    if (depth > 0.0) out.push_back({p + 0.5 * depth * ref_normal, normal_for_a, depth});
  }
}

// Midpoint of the closest points of two lines p + s·u and q + t·v.
Vec3 edge_midpoint(const Vec3& p, const Vec3& u, double hu, const Vec3& q, const Vec3& v, double hv) {
  const Vec3 w = p - q;
  const double uv = u.dot(v);
  const double denom = 1.0 - uv * uv;
  double s = 0.0;
  double t = 0.0;
  if (denom > 1e-12) {
    s = (uv * v.dot(w) - u.dot(w)) / denom;
    t = (v.dot(w) - uv * u.dot(w)) / denom;
  }
  s = std::clamp(s, -hu, hu);
  t = std::clamp(t, -hv, hv);
  return 0.5 * ((p + s * u) + (q + t * v));
}

}  // namespace

void box_box_contacts(const Cuboid& ca, const Cuboid& cb, std::vector<ContactPoint>& out) {
  const BoxFrame a = frame(ca);
  const BoxFrame b = frame(cb);
  Axis face;
  Axis edge;
  if (!best_axis(a, b, face, edge)) return;

  if (edge.kind == 2 && edge.overlap < 0.95 * face.overlap - 1e-5) {
    const Vec3& n = edge.n;
    // Edge of a nearest b, edge of b nearest a.
    Vec3 pa = a.c;
    for (int k = 0; k < 3; ++k) {
      if (k == edge.i) continue;
      pa += (a.r.col(k).dot(n) > 0.0 ? -1.0 : 1.0) * a.h[k] * a.r.col(k);
    }
    Vec3 pb = b.c;
    for (int k = 0; k < 3; ++k) {
      if (k == edge.j) continue;
      pb += (b.r.col(k).dot(n) > 0.0 ? 1.0 : -1.0) * b.h[k] * b.r.col(k);
    }
    const Vec3 p = edge_midpoint(pa, a.r.col(edge.i), a.h[edge.i], pb, b.r.col(edge.j), b.h[edge.j]);
    out.push_back({p, n, edge.overlap});
    return;
  }
  if (face.kind == 0) {
    // Reference face on a, facing b.
    const Vec3 ref_normal = -face.n;
    face_contacts(a, face.i, ref_normal, b, face.n, out);
  } else {
    face_contacts(b, face.i, face.n, a, face.n, out);
  }
}

double box_box_depth(const Cuboid& ca, const Cuboid& cb) {
  const BoxFrame a = frame(ca);
  const BoxFrame b = frame(cb);
  const Vec3 d = a.c - b.c;
  double best = std::numeric_limits<double>::infinity();
  auto test = [&](const Vec3& raw) {
    const double len = raw.norm();
    if (len < 1e-9) return;
    const Vec3 axis = raw / len;
    best = std::min(best, radius_along(a, axis) + radius_along(b, axis) - std::abs(d.dot(axis)));
  };
  for (int i = 0; i < 3; ++i) test(a.r.col(i));
  for (int i = 0; i < 3; ++i) test(b.r.col(i));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) test(a.r.col(i).cross(b.r.col(j)));
  }
  return best;
}

bool sphere_box_contact(const Vec3& center, double radius, const Cuboid& box, ContactPoint& out) {
  const BoxFrame b = frame(box);
  const Vec3 local = b.r.transpose() * (center - b.c);
  const Vec3 q = local.cwiseMax(-b.h).cwiseMin(b.h);
  const Vec3 diff = local - q;
  const double dist2 = diff.squaredNorm();
  if (dist2 > 0.0) {
    if (dist2 >= radius * radius) return false;
    const double dist = std::sqrt(dist2);
    out.normal = b.r * (diff / dist);
    out.depth = radius - dist;
    out.point = b.c + b.r * q;
    return true;
  }
  // Center inside the box: leave through the nearest face.
  int axis = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double g = b.h[i] - std::abs(local[i]);
    if (g < gap) {
      gap = g;
      axis = i;
    }
  }
  out.normal = (local[axis] >= 0.0 ? 1.0 : -1.0) * b.r.col(axis);
  out.depth = radius + gap;
  out.point = center;
  return true;
}

void box_floor_contacts(const Cuboid& box, std::vector<ContactPoint>& out) {
  if (box.lowest_z() >= 0.0) return;
  for (const Vec3& p : box.corners()) {
    if (p.z() < 0.0) out.push_back({p, Vec3::UnitZ(), -p.z()});
  }
}

void box_wall_contacts(const Cuboid& box, double radius, std::vector<ContactPoint>& out) {
  const double reach = box.pose.position.head<2>().norm() + 0.5 * box.size.norm();
  if (reach <= radius) return;
  for (const Vec3& p : box.corners()) {
    const double r = std::hypot(p.x(), p.y());
    if (r > radius) out.push_back({p, Vec3(-p.x() / r, -p.y() / r, 0.0), r - radius});
  }
}

}  // namespace blockbench::detail
