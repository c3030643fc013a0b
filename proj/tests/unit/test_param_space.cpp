#include "blockbench/param_space.hpp"
#include "blockbench/rng.hpp"
#include "blockbench/tasks.hpp"

#include <gtest/gtest.h>

using namespace blockbench;

namespace {

const VariableCatalog& cat() { return VariableCatalog::builtin(); }

EnvConfig default_config() { return build_task(Family::pushing).config; }

}  // namespace

TEST(Membership, MassAndGravityEdges) {
  EXPECT_TRUE(space_membership(cat(), "block_0.mass", {0.03}, Space::A));
  EXPECT_FALSE(space_membership(cat(), "block_0.mass", {0.05}, Space::A));
  EXPECT_TRUE(space_membership(cat(), "block_0.mass", {0.05}, Space::B));
  EXPECT_FALSE(space_membership(cat(), "gravity_z", {-7.0}, Space::A));
  EXPECT_TRUE(space_membership(cat(), "gravity_z", {-7.0}, Space::B));
  EXPECT_TRUE(space_membership(cat(), "gravity_z", {-7.0}, Space::AorB));
  EXPECT_FALSE(space_membership(cat(), "gravity_z", {-4.0}, Space::AorB));
}

TEST(Membership, Errors) {
  EXPECT_THROW(space_membership(cat(), "block_0.charge", {1.0}, Space::A), CatalogError);
  EXPECT_THROW(space_membership(cat(), "block_0.size", {0.06}, Space::A), CatalogError);
}

TEST(Membership, HeightBoundFollowsTheBlockSize) {
  EnvConfig c = default_config();
  const double h = c.get("block_0.size")[2];
  const Values low{0.05, 0.0, 0.5 * h - 1e-6, 0.0};
  const Values on{0.05, 0.0, 0.5 * h, 0.0};
  EXPECT_FALSE(space_membership(cat(), "block_0.pose_cyl", low, Space::A, &c));
  EXPECT_TRUE(space_membership(cat(), "block_0.pose_cyl", on, Space::A, &c));
  c.set("block_0.size", {0.07, 0.07, 0.07});
  EXPECT_FALSE(space_membership(cat(), "block_0.pose_cyl", on, Space::A, &c));
}

TEST(Membership, NoValueInBothSpaces) {
  const EnvConfig ctx = default_config();
  for (const auto& [tid, spec] : cat().specs()) {
    const auto dot = tid.find('.');
    const std::string id = dot == std::string::npos ? tid : tid.substr(0, dot) + "_0" + tid.substr(dot);
    Rng rng(fnv1a(tid));
    for (int i = 0; i < 10000; ++i) {
      Values v(spec.dims);
      for (int d = 0; d < spec.dims; ++d) {
        const double lo = std::min(spec.space_a[d].lo, spec.space_b[d].lo) - 0.1;
        const double hi = std::max(spec.space_a[d].hi, spec.space_b[d].hi) + 0.1;
        v[d] = rng.uniform(lo, hi);
        // Push half the draws onto an interval endpoint.
        if (rng.unit() < 0.5) v[d] = rng.unit() < 0.5 ? spec.space_a[d].hi : spec.space_b[d].hi;
      }
      EXPECT_FALSE(space_membership(cat(), id, v, Space::A, &ctx) && space_membership(cat(), id, v, Space::B, &ctx))
          << id;
    }
  }
}

TEST(Sampling, StaysInTheNamedSpace) {
  const auto a = sample_intervention(cat(), {"floor_friction"}, Space::A, 7);
  EXPECT_GE(a.assignments.at("floor_friction")[0], 0.3);
  EXPECT_LT(a.assignments.at("floor_friction")[0], 0.6);
  const auto b = sample_intervention(cat(), {"goal_height"}, Space::B, 7);
  EXPECT_GE(b.assignments.at("goal_height")[0], 0.2);
  EXPECT_LT(b.assignments.at("goal_height")[0], 0.25);
}

TEST(Sampling, PureFunctionOfItsInputs) {
  const std::set<std::string> vars{"block_0.size", "block_0.pose_cyl", "gravity_z", "num_blocks"};
  EXPECT_EQ(sample_intervention(cat(), vars, Space::B, 3), sample_intervention(cat(), vars, Space::B, 3));
  EXPECT_NE(sample_intervention(cat(), vars, Space::B, 3), sample_intervention(cat(), vars, Space::B, 4));
  EXPECT_TRUE(sample_intervention(cat(), {}, Space::A, 3).empty());
  EXPECT_THROW(sample_intervention(cat(), vars, Space::AorB, 3), CatalogError);
}

TEST(Sampling, PoseHeightSeesTheSampledSize) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto iv = sample_intervention(cat(), {"block_0.size", "block_0.pose_cyl"}, Space::B, s);
    EXPECT_GE(iv.assignments.at("block_0.pose_cyl")[2], 0.5 * iv.assignments.at("block_0.size")[2]);
  }
}

TEST(Sampling, DiscreteCountIsWhole) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const double n = sample_intervention(cat(), {"num_blocks"}, Space::A, s).assignments.at("num_blocks")[0];
    EXPECT_EQ(n, std::floor(n));
    EXPECT_GE(n, 1.0);
    EXPECT_LT(n, 9.0);
  }
}

TEST(Apply, Locality) {
  const EnvConfig c = default_config();
  Intervention iv;
  iv.assignments["block_0.mass"] = {0.03};
  const EnvConfig out = std::get<EnvConfig>(apply_intervention(cat(), c, iv));
  for (const std::string& id : c.ids()) {
    if (id == "block_0.mass") {
      EXPECT_EQ(out.get(id), Values{0.03});
    } else {
      EXPECT_EQ(out.get(id), c.get(id)) << id;
    }
  }
  EXPECT_EQ(std::get<EnvConfig>(apply_intervention(cat(), c, {})), c);
}

TEST(Apply, OutOfRangeIsRejected) {
  Intervention iv;
  iv.assignments["block_0.size"] = {0.5, 0.5, 0.5};
  const auto r = apply_intervention(cat(), default_config(), iv);
  ASSERT_TRUE(std::holds_alternative<Rejection>(r));
  EXPECT_EQ(std::get<Rejection>(r).code, RejectCode::out_of_range);
  iv.assignments = {{"floor_friction", {1.5}}};  // outside A and B, inside the physical range
  EXPECT_TRUE(std::holds_alternative<EnvConfig>(apply_intervention(cat(), default_config(), iv)));
  iv.assignments = {{"gravity_z", {std::nan("")}}};
  EXPECT_TRUE(std::holds_alternative<Rejection>(apply_intervention(cat(), default_config(), iv)));
}

TEST(Interpolate, EndpointsAndMidpoint) {
  EnvConfig a = default_config();
  EnvConfig b = a;
  a.set("block_0.mass", {0.02});
  b.set("block_0.mass", {0.04});
  EXPECT_EQ(interpolate(cat(), a, b, 0.0), a);
  EXPECT_EQ(interpolate(cat(), a, b, 1.0), b);
  EXPECT_DOUBLE_EQ(interpolate(cat(), a, b, 0.5).scalar("block_0.mass"), 0.03);
}

TEST(Interpolate, StaysInsideConvexSpaces) {
  const EnvConfig base = default_config();
  const std::set<std::string> vars{"gravity_z", "floor_friction", "block_0.mass", "block_0.size", "stage_color"};
  for (std::uint64_t s = 0; s < 100; ++s) {
    EnvConfig a = base;
    EnvConfig b = base;
    for (const auto& [id, v] : sample_intervention(cat(), vars, Space::A, s).assignments) a.set(id, v);
    for (const auto& [id, v] : sample_intervention(cat(), vars, Space::B, s).assignments) b.set(id, v);
    const EnvConfig m = interpolate(cat(), a, b, Rng(s).unit());
    // A∪B of a vector variable is two boxes, so convexity holds per coordinate.
    for (const std::string& id : vars) {
      const VariableSpec& spec = cat().spec(id);
      for (int d = 0; d < spec.dims; ++d) {
        const double v = m.get(id)[d];
        EXPECT_TRUE(spec.space_a[d].contains(v, spec.space_a[d].lo) || spec.space_b[d].contains(v, spec.space_b[d].lo))
            << id << "[" << d << "]";
      }
    }
  }
}

TEST(Interpolate, DiscreteSwitchesAtHalf) {
  EnvConfig a;
  EnvConfig b;
  a.set("num_blocks", {2});
  b.set("num_blocks", {5});
  EXPECT_EQ(interpolate(cat(), a, b, 0.49).scalar("num_blocks"), 2);
  EXPECT_EQ(interpolate(cat(), a, b, 0.5).scalar("num_blocks"), 5);
}

TEST(Catalog, DocumentRoundTripAndErrors) {
  const VariableCatalog back = VariableCatalog::from_json(cat().to_json());
  EXPECT_EQ(back.to_json(), cat().to_json());
  EXPECT_THROW(VariableCatalog::from_json({{"version", "x"}}), CatalogError);
  auto doc = cat().to_json();
  doc["variables"]["block.mass"]["space_a"] = {{0.045, 0.015}};
  EXPECT_THROW(VariableCatalog::from_json(doc), CatalogError);
  EXPECT_THROW(VariableCatalog::load("/nonexistent/catalog.json"), CatalogError);
}

TEST(Catalog, InstanceIds) {
  EXPECT_EQ(split_instance_id("block_3.mass"), (std::pair<std::string, int>{"block.mass", 3}));
  EXPECT_EQ(split_instance_id("gravity_z"), (std::pair<std::string, int>{"gravity_z", -1}));
  const auto ids = cat().instantiate("pushing", 1, 1);
  EXPECT_NE(std::find(ids.begin(), ids.end(), "goal_0.pose_cyl"), ids.end());
  EXPECT_EQ(std::find(ids.begin(), ids.end(), "tower_dims"), ids.end());
  EXPECT_EQ(std::count_if(ids.begin(), ids.end(), [](const std::string& s) { return s.rfind("link_", 0) == 0; }), 18);
}
