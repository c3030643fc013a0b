#pragma once

// Evaluation protocols: which variables are drawn from which space before
// each episode, scoring by final fractional success, and report tables.

#include "blockbench/env.hpp"
#include "blockbench/scripted_policies.hpp"
#include "blockbench/tasks.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockbench {

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shorthand variable groups of the protocol suite.
enum class ProtocolVariable { block_pose, block_mass, block_size, goal_pose, floor_friction };

std::string to_string(ProtocolVariable v);
std::string shorthand(ProtocolVariable v);  // bp, bm, bs, gp, ff
ProtocolVariable protocol_variable_from_string(std::string_view s);

/// Instance ids a group expands to for `task`.
std::set<std::string> protocol_ids(ProtocolVariable v, const TaskInstance& task);

struct ProtocolSpec {
  std::string id;
  Family family = Family::pushing;
  std::vector<ProtocolVariable> variables;
  std::optional<Space> space;  // unset: default task, nothing sampled
  int timestep = 0;            // 0 = at reset

  /// Throws ConfigError when the variable set and space disagree.
  void validate() const;
  bool operator==(const ProtocolSpec&) const = default;
};

inline constexpr const char* kProtocolSuiteVersion = "1";

/// P0 default; P1-P5 {ff}, {bm}, {bs}, {bp}, {gp} from A; P6-P10 the same
/// from B; P11 all five from B.
std::vector<ProtocolSpec> default_protocol_suite(Family family);

struct EpisodeRecord {
  std::uint64_t seed = 0;
  double score = 0.0;
  bool failed = false;
  std::string failure;  // empty unless failed
  /// Values drawn from the protocol's space for the protocol's variables.
  std::map<std::string, Values> sampled;
  /// Assignments the family rules added to keep the instance valid (for
  /// example a goal re-floored after a block size change).
  std::map<std::string, Values> implied;
};

struct ScoreReport {
  std::string protocol_id;
  Family family = Family::pushing;
  std::optional<Space> space;
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;

  int failed_count() const;
  /// Arithmetic mean of final scores; failed episodes count as 0.
  double mean() const;
  std::vector<double> scores() const;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>(std::uint64_t episode_seed)>;

struct RunOptions {
  int episodes = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  EnvOptions env;
};

/// Episode seeds are derive_seed(seed, e). Deterministic for any thread count.
ScoreReport run_protocol(const ProtocolSpec& protocol, const PolicyFactory& policy, const RunOptions& options,
                         const std::string& policy_name = "",
                         const VariableCatalog& catalog = VariableCatalog::builtin(),
                         const PhysicsConstants& physics = PhysicsConstants::builtin());

/// Sampled values that fail membership of the report's declared space. Each
/// episode's instance is rebuilt from the default task to resolve
/// height-dependent bounds.
std::vector<std::string> audit_space(const ScoreReport& report,
                                     const VariableCatalog& catalog = VariableCatalog::builtin());

struct BenchmarkRow {
  std::string protocol_id;
  int reports = 0;
  double mean = 0.0;
  double std = 0.0;  // sample std of the report means; 0 for one report
  int episodes = 0;
  int failed = 0;
};

struct BenchmarkTable {
  Family family = Family::pushing;
  std::vector<BenchmarkRow> rows;  // protocol order of first appearance
};

/// Throws AggregationError for an empty list or mixed families.
BenchmarkTable aggregate_report(const std::vector<ScoreReport>& reports);

nlohmann::json to_json(const ProtocolSpec& p);
ProtocolSpec protocol_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScoreReport& r);
ScoreReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkTable& t);
std::string to_csv(const BenchmarkTable& t);
/// One line per episode: protocol,episode,seed,score,failed.
std::string to_csv(const ScoreReport& r);

}  // namespace blockbench
