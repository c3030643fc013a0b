#include "blockbench/param_space.hpp"

#include "blockbench/rng.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

namespace blockbench {

// Defined in the generated catalog_data.cpp.
extern const char* const kBuiltinCatalogJson;

std::string to_string(Space s) {
  switch (s) {
    case Space::A: return "A";
    case Space::B: return "B";
    case Space::AorB: return "AorB";
  }
  return "?";
}

Space space_from_string(std::string_view s) {
  if (s == "A") return Space::A;
  if (s == "B") return Space::B;
  if (s == "AorB" || s == "A|B") return Space::AorB;
  throw CatalogError("unknown space '" + std::string(s) + "'");
}

std::string to_string(RejectCode c) {
  switch (c) {
    case RejectCode::out_of_range: return "out_of_range";
    case RejectCode::floor_level: return "floor_level";
    case RejectCode::family_block_count: return "family_block_count";
    case RejectCode::family_shape: return "family_shape";
    case RejectCode::invalid_state: return "invalid_state";
  }
  return "?";
}

bool VariableSpec::applies_to(std::string_view family) const {
  return families.empty() ||
         std::find(families.begin(), families.end(), family) != families.end();
}

const Values& EnvConfig::get(std::string_view id) const {
  auto it = values_.find(std::string(id));
  if (it == values_.end()) throw ConfigError("config has no variable '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> EnvConfig::ids() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, _] : values_) out.push_back(k);
  return out;
}

void EnvConfig::require_complete(const std::vector<std::string>& ids) const {
  for (const auto& id : ids) {
    const Values& v = get(id);
    for (double x : v) {
      if (!std::isfinite(x)) throw ConfigError("variable '" + id + "' is not finite");
    }
  }
}

std::pair<std::string, int> split_instance_id(std::string_view id) {
  const auto dot = id.find('.');
  if (dot == std::string_view::npos) return {std::string(id), -1};
  const std::string_view head = id.substr(0, dot);
  const auto us = head.rfind('_');
  if (us == std::string_view::npos) return {std::string(id), -1};
  int index = 0;
  const std::string_view digits = head.substr(us + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
    return {std::string(id), -1};
  }
  return {std::string(head.substr(0, us)) + std::string(id.substr(dot)), index};
}

namespace {

Scope scope_from_string(const std::string& s) {
  if (s == "global") return Scope::global;
  if (s == "block") return Scope::block;
  if (s == "goal") return Scope::goal;
  if (s == "link") return Scope::link;
  if (s == "task") return Scope::task;
  throw CatalogError("unknown scope '" + s + "'");
}

std::string scope_name(Scope s) {
  switch (s) {
    case Scope::global: return "global";
    case Scope::block: return "block";
    case Scope::goal: return "goal";
    case Scope::link: return "link";
    case Scope::task: return "task";
  }
  return "?";
}

std::vector<Interval> parse_intervals(const nlohmann::json& arr, int dims, const std::string& id) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != dims) {
    throw CatalogError("variable '" + id + "': interval list must have " + std::to_string(dims) +
                       " entries");
  }
  std::vector<Interval> out;
  for (const auto& pair : arr) {
    if (!pair.is_array() || pair.size() != 2) throw CatalogError("variable '" + id + "': bad interval");
    Interval iv;
    if (pair[0].is_string()) {
      if (pair[0].get<std::string>() != "h/2") throw CatalogError("variable '" + id + "': bad bound");
      iv.lo_is_half_height = true;
    } else {
      iv.lo = pair[0].get<double>();
    }
    iv.hi = pair[1].get<double>();
    if (!iv.lo_is_half_height && !(iv.lo < iv.hi)) {
      throw CatalogError("variable '" + id + "': empty interval");
    }
    out.push_back(iv);
  }
  return out;
}

nlohmann::json intervals_json(const std::vector<Interval>& ivs) {
  auto arr = nlohmann::json::array();
  for (const auto& iv : ivs) {
    nlohmann::json lo = iv.lo_is_half_height ? nlohmann::json("h/2") : nlohmann::json(iv.lo);
    arr.push_back({lo, iv.hi});
  }
  return arr;
}

}  // namespace

VariableCatalog VariableCatalog::from_json(const nlohmann::json& doc) {
  VariableCatalog cat;
  cat.version_ = doc.value("version", "unversioned");
  if (!doc.contains("variables") || !doc["variables"].is_object()) {
    throw CatalogError("catalog document has no 'variables' object");
  }
  for (const auto& [id, entry] : doc["variables"].items()) {
    VariableSpec s;
    s.id = id;
    s.dims = entry.at("dims").get<int>();
    if (s.dims < 1) throw CatalogError("variable '" + id + "': dims must be positive");
    s.scope = scope_from_string(entry.value("scope", "global"));
    s.space_a = parse_intervals(entry.at("space_a"), s.dims, id);
    s.space_b = parse_intervals(entry.at("space_b"), s.dims, id);
    s.physical = entry.contains("physical") ? parse_intervals(entry["physical"], s.dims, id)
                                            : std::vector<Interval>{};
    s.default_value = entry.at("default").get<Values>();
    if (static_cast<int>(s.default_value.size()) != s.dims) {
      throw CatalogError("variable '" + id + "': default has wrong dimensionality");
    }
    s.units = entry.value("units", "");
    s.discrete = entry.value("discrete", false);
    if (entry.contains("families")) s.families = entry["families"].get<std::vector<std::string>>();
    cat.specs_.emplace(id, std::move(s));
  }
  return cat;
}

VariableCatalog VariableCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CatalogError("cannot open catalog " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw CatalogError("catalog " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

const VariableCatalog& VariableCatalog::builtin() {
  static const VariableCatalog cat = from_json(nlohmann::json::parse(kBuiltinCatalogJson));
  return cat;
}

nlohmann::json VariableCatalog::to_json() const {
  nlohmann::json vars = nlohmann::json::object();
  for (const auto& [id, s] : specs_) {
    nlohmann::json e{{"dims", s.dims},
                     {"scope", scope_name(s.scope)},
                     {"space_a", intervals_json(s.space_a)},
                     {"space_b", intervals_json(s.space_b)},
                     {"default", s.default_value},
                     {"units", s.units}};
    if (!s.physical.empty()) e["physical"] = intervals_json(s.physical);
    if (s.discrete) e["discrete"] = true;
    if (!s.families.empty()) e["families"] = s.families;
    vars[id] = std::move(e);
  }
  return {{"version", version_}, {"variables", vars}};
}

bool VariableCatalog::knows(std::string_view id) const {
  return specs_.count(split_instance_id(id).first) != 0;
}

const VariableSpec& VariableCatalog::spec(std::string_view id) const {
  auto it = specs_.find(split_instance_id(id).first);
  if (it == specs_.end()) throw CatalogError("unknown variable '" + std::string(id) + "'");
  return it->second;
}

std::vector<std::string> VariableCatalog::instantiate(std::string_view family, int n_blocks,
                                                      int n_goals, int n_links) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : specs_) {
    if (!s.applies_to(family)) continue;
    const auto dot = id.find('.');
    auto expand = [&](const char* prefix, int n) {
      for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i) + id.substr(dot));
    };
    switch (s.scope) {
      case Scope::global:
      case Scope::task: out.push_back(id); break;
      case Scope::block: expand("block_", n_blocks); break;
      case Scope::goal: expand("goal_", n_goals); break;
      case Scope::link: expand("link_", n_links); break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double VariableCatalog::resolved_lo(std::string_view id, const Interval& iv,
                                    const EnvConfig* ctx) const {
  if (!iv.lo_is_half_height) return iv.lo;
  const std::string sid(id);
  const auto dot = sid.find('.');
  const std::string size_id = sid.substr(0, dot) + ".size";
  if (ctx != nullptr && ctx->has(size_id)) return 0.5 * ctx->get(size_id).at(2);
  // Without a context the smallest admissible height is assumed.
  const VariableSpec& size_spec = spec(size_id);
  return 0.5 * std::min(size_spec.space_a[2].lo, size_spec.space_b[2].lo);
}

namespace {

void check_dims(const VariableSpec& s, std::string_view id, const Values& value) {
  if (static_cast<int>(value.size()) != s.dims) {
    throw CatalogError("variable '" + std::string(id) + "' expects " + std::to_string(s.dims) +
                       " values, got " + std::to_string(value.size()));
  }
}

bool in_space(const VariableCatalog& cat, const VariableSpec& s, std::string_view id,
              const Values& value, Space space, const EnvConfig* ctx) {
  const auto& ivs = s.intervals(space);
  for (int d = 0; d < s.dims; ++d) {
    if (!ivs[d].contains(value[d], cat.resolved_lo(id, ivs[d], ctx))) return false;
  }
  return true;
}

}  // namespace

bool space_membership(const VariableCatalog& catalog, std::string_view id, const Values& value,
                      Space space, const EnvConfig* ctx) {
  const VariableSpec& s = catalog.spec(id);
  check_dims(s, id, value);
  if (space == Space::AorB) {
    return in_space(catalog, s, id, value, Space::A, ctx) ||
           in_space(catalog, s, id, value, Space::B, ctx);
  }
  return in_space(catalog, s, id, value, space, ctx);
}

bool within_admissible_range(const VariableCatalog& catalog, std::string_view id,
                             const Values& value, const EnvConfig* ctx) {
  if (space_membership(catalog, id, value, Space::AorB, ctx)) return true;
  const VariableSpec& s = catalog.spec(id);
  if (s.physical.empty()) return false;
  for (int d = 0; d < s.dims; ++d) {
    const Interval& iv = s.physical[d];
    const double lo = catalog.resolved_lo(id, iv, ctx);
    if (!(value[d] >= lo && value[d] <= iv.hi)) return false;  // closed
  }
  return true;
}

Intervention sample_intervention(const VariableCatalog& catalog, const std::set<std::string>& vars,
                                 Space space, std::uint64_t seed, const EnvConfig* ctx) {
  if (space == Space::AorB) throw CatalogError("sampling needs a single space (A or B)");
  Intervention iv;
  if (vars.empty()) return iv;

  // Height-independent variables first so dependent bounds see fresh sizes.
  std::vector<std::string> ordered;
  for (const auto& id : vars) {
    const VariableSpec& s = catalog.spec(id);
    const bool dependent = std::any_of(s.intervals(space).begin(), s.intervals(space).end(),
                                       [](const Interval& i) { return i.lo_is_half_height; });
    if (!dependent) ordered.push_back(id);
  }
  for (const auto& id : vars) {
    if (std::find(ordered.begin(), ordered.end(), id) == ordered.end()) ordered.push_back(id);
  }

  EnvConfig view = ctx != nullptr ? *ctx : EnvConfig{};
  for (const auto& id : ordered) {
    const VariableSpec& s = catalog.spec(id);
    // One stream per variable keeps samples stable when the set grows.
    Rng rng(derive_seed(seed, fnv1a(id)));
    Values v(s.dims);
    const auto& ivs = s.intervals(space);
    for (int d = 0; d < s.dims; ++d) {
      const double lo = catalog.resolved_lo(id, ivs[d], &view);
      v[d] = s.discrete ? std::floor(rng.uniform(lo, ivs[d].hi)) : rng.uniform(lo, ivs[d].hi);
    }
    view.set(id, v);
    iv.assignments[id] = std::move(v);
  }
  return iv;
}

ApplyResult apply_intervention(const VariableCatalog& catalog, const EnvConfig& config,
                               const Intervention& iv) {
  EnvConfig out = config;
  for (const auto& [id, value] : iv.assignments) {
    const VariableSpec& s = catalog.spec(id);
    check_dims(s, id, value);
    out.set(id, value);
  }
  // Range checks run against the post-intervention config so that a size
  // change and a pose change in one intervention are judged together.
  for (const auto& [id, value] : iv.assignments) {
    for (double x : value) {
      if (!std::isfinite(x)) return Rejection{RejectCode::out_of_range, id + " is not finite"};
    }
    if (!within_admissible_range(catalog, id, value, &out)) {
      return Rejection{RejectCode::out_of_range, id + " lies outside A∪B and its physical range"};
    }
  }
  return out;
}

EnvConfig interpolate(const VariableCatalog& catalog, const EnvConfig& a, const EnvConfig& b,
                      double alpha) {
  if (alpha <= 0.0) return a;
  if (alpha >= 1.0) return b;
  // Structure (the variable set) follows the nearer endpoint.
  const EnvConfig& base = alpha < 0.5 ? a : b;
  EnvConfig out = base;
  for (const auto& [id, va] : a.values()) {
    if (!b.has(id) || !base.has(id)) continue;
    const Values& vb = b.get(id);
    if (vb.size() != va.size()) continue;
    if (catalog.knows(id) && catalog.spec(id).discrete) continue;
    Values v(va.size());
    for (std::size_t d = 0; d < va.size(); ++d) v[d] = (1.0 - alpha) * va[d] + alpha * vb[d];
    out.set(id, std::move(v));
  }
  return out;
}

nlohmann::json to_json(const EnvConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : c.values()) j[k] = v;
  return j;
}

EnvConfig config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  for (const auto& [k, v] : j.items()) c.set(k, v.get<Values>());
  return c;
}

nlohmann::json to_json(const Intervention& iv) {
  nlohmann::json a = nlohmann::json::object();
  for (const auto& [k, v] : iv.assignments) a[k] = v;
  nlohmann::json j{{"assignments", a}};
  if (iv.timing.kind == Timing::Kind::on_reset) {
    j["timing"] = "on_reset";
  } else {
    j["timing"] = {{"at_step", iv.timing.step}};
  }
  return j;
}

Intervention intervention_from_json(const nlohmann::json& j) {
  Intervention iv;
  const nlohmann::json& a = j.contains("assignments") ? j["assignments"] : j;
  for (const auto& [k, v] : a.items()) {
    if (k == "timing") continue;
    iv.assignments[k] = v.get<Values>();
  }
  if (j.contains("timing") && j["timing"].is_object()) {
    iv.timing.kind = Timing::Kind::at_step;
    iv.timing.step = j["timing"].at("at_step").get<int>();
  }
  return iv;
}

}  // namespace blockbench
