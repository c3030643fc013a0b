#pragma once

// Environment variable catalog: A/B spaces, membership, sampling, and the
// intervention algebra over complete environment configurations.

#include "blockbench/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace blockbench {

enum class Space { A, B, AorB };

std::string to_string(Space s);
Space space_from_string(std::string_view s);

/// Half-open interval [lo, hi). When `lo_is_half_height` is set the lower
/// bound is resolved at query time to half the current height of the owning
/// body (dimension 2 of its sibling `size` variable).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_is_half_height = false;

  bool contains(double v, double resolved_lo) const { return resolved_lo <= v && v < hi; }
};

enum class Scope { global, block, goal, link, task };

struct VariableSpec {
  std::string id;  // template id, e.g. "block.mass"
  Scope scope = Scope::global;
  int dims = 1;
  std::vector<Interval> space_a;
  std::vector<Interval> space_b;
  std::vector<Interval> physical;  // explicit full range accepted by interventions
  Values default_value;
  std::string units;
  bool discrete = false;
  std::vector<std::string> families;  // empty: every family

  const std::vector<Interval>& intervals(Space s) const { return s == Space::A ? space_a : space_b; }
  bool applies_to(std::string_view family) const;
};

/// A complete assignment of every instantiated variable of one environment.
class EnvConfig {
 public:
  EnvConfig() = default;

  bool has(std::string_view id) const { return values_.find(std::string(id)) != values_.end(); }
  const Values& get(std::string_view id) const;
  double scalar(std::string_view id) const { return get(id).at(0); }
  void set(const std::string& id, Values v) { values_[id] = std::move(v); }

  const std::map<std::string, Values>& values() const { return values_; }
  std::vector<std::string> ids() const;
  std::size_t size() const { return values_.size(); }

  /// Throws ConfigError when an id is missing or a value is not finite.
  void require_complete(const std::vector<std::string>& ids) const;

  bool operator==(const EnvConfig&) const = default;

 private:
  std::map<std::string, Values> values_;
};

struct Timing {
  enum class Kind { on_reset, at_step };
  Kind kind = Kind::on_reset;
  int step = 0;
  bool operator==(const Timing&) const = default;
};

struct Intervention {
  std::map<std::string, Values> assignments;
  Timing timing;

  bool empty() const { return assignments.empty(); }
  bool operator==(const Intervention&) const = default;
};

enum class RejectCode { out_of_range, floor_level, family_block_count, family_shape, invalid_state };

std::string to_string(RejectCode c);

struct Rejection {
  RejectCode code = RejectCode::out_of_range;
  std::string detail;
};

using ApplyResult = std::variant<EnvConfig, Rejection>;

/// Splits "block_3.mass" into ("block.mass", 3); ids without an instance index
/// map to themselves with index -1.
std::pair<std::string, int> split_instance_id(std::string_view id);

class VariableCatalog {
 public:
  static VariableCatalog from_json(const nlohmann::json& doc);
  static VariableCatalog load(const std::filesystem::path& path);
  /// The shipped catalog (data/catalog.json compiled in).
  static const VariableCatalog& builtin();

  nlohmann::json to_json() const;

  /// Spec for a template or instance id. Throws CatalogError when unknown.
  const VariableSpec& spec(std::string_view id) const;
  bool knows(std::string_view id) const;

  const std::map<std::string, VariableSpec>& specs() const { return specs_; }
  const std::string& version() const { return version_; }

  /// Every variable an environment of this shape exposes, in catalog order.
  std::vector<std::string> instantiate(std::string_view family, int n_blocks, int n_goals,
                                       int n_links = 9) const;

  /// Lower bound of `dim` for instance `id`, resolving height-dependent bounds
  /// against `ctx` (or the smallest admissible height when ctx lacks it).
  double resolved_lo(std::string_view id, const Interval& iv, const EnvConfig* ctx) const;

 private:
  std::string version_;
  std::map<std::string, VariableSpec> specs_;
};

/// True iff `value` lies componentwise in the named space.
bool space_membership(const VariableCatalog& catalog, std::string_view id, const Values& value,
                      Space space, const EnvConfig* ctx = nullptr);

/// True iff `value` lies in A∪B or in the declared physical range.
bool within_admissible_range(const VariableCatalog& catalog, std::string_view id,
                             const Values& value, const EnvConfig* ctx = nullptr);

/// Uniform per-dimension samples; a pure function of (vars, space, seed, ctx).
/// Height-dependent bounds see sizes sampled in the same call.
Intervention sample_intervention(const VariableCatalog& catalog, const std::set<std::string>& vars,
                                 Space space, std::uint64_t seed, const EnvConfig* ctx = nullptr);

/// Assigns the intervention's values; every other variable is copied exactly.
ApplyResult apply_intervention(const VariableCatalog& catalog, const EnvConfig& config,
                               const Intervention& iv);

/// Componentwise linear blend; discrete variables switch at alpha = 0.5.
EnvConfig interpolate(const VariableCatalog& catalog, const EnvConfig& a, const EnvConfig& b,
                      double alpha);

nlohmann::json to_json(const EnvConfig& c);
EnvConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Intervention& iv);
Intervention intervention_from_json(const nlohmann::json& j);

}  // namespace blockbench
