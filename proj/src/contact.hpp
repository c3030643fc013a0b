#pragma once

// Narrow-phase contact generation between oriented boxes, spheres and the
// static floor/stage geometry.

#include "blockbench/geometry.hpp"

#include <vector>

namespace blockbench::detail {

struct ContactPoint {
  Vec3 point;   // world position where the force acts
  Vec3 normal;  // unit, pushes the first body away from the second
  double depth = 0.0;
};

/// Contacts between two boxes; empty when separated. Normals push `a` away from `b`.
void box_box_contacts(const Cuboid& a, const Cuboid& b, std::vector<ContactPoint>& out);

/// Penetration depth of two boxes along the separating-axis minimum (<= 0 when apart).
double box_box_depth(const Cuboid& a, const Cuboid& b);

/// Sphere vs box. Normal pushes the sphere away from the box.
bool sphere_box_contact(const Vec3& center, double radius, const Cuboid& box, ContactPoint& out);

/// Box corners below z = 0. Normal +z.
void box_floor_contacts(const Cuboid& box, std::vector<ContactPoint>& out);

/// Box corners outside the vertical cylinder of `radius`. Normal points inward.
void box_wall_contacts(const Cuboid& box, double radius, std::vector<ContactPoint>& out);

}  // namespace blockbench::detail
