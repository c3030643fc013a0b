#pragma once

// Run configuration, JSON-lines episode logs, and record/replay.

#include "blockbench/curriculum.hpp"
#include "blockbench/env.hpp"
#include "blockbench/scripted_policies.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace blockbench {

inline constexpr const char* kEpisodeLogSchema = "blockbench.episode_log/1";
inline constexpr int kSnapshotEvery = 50;

/// FNV-1a over the little-endian bytes of every observation entry, as 16 hex digits.
std::string obs_digest(const Observation& o);

/// Everything one recorded episode depends on.
struct RunConfig {
  Family family = Family::pushing;
  TaskParams params;
  std::uint64_t seed = 0;
  int episode = 0;
  Curriculum curriculum;
  std::string policy = "noop";
  EnvOptions env;
  int max_steps = 0;              // 0: run to the time limit
  bool log_observations = false;  // full observations in every record

  bool operator==(const RunConfig&) const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults. Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Base constants with the keys of `overrides` replaced.
PhysicsConstants physics_with_overrides(const nlohmann::json& overrides,
                                        const PhysicsConstants& base = PhysicsConstants::builtin());

struct LoggedIntervention {
  Intervention intervention;
  bool applied = false;
  std::optional<Observation> observation;
};

struct LogRecord {
  int t = 0;
  RobotCommand action;
  std::string obs_digest;  // observation after the step
  double reward = 0.0;
  double fractional_success = 0.0;
  std::vector<LoggedIntervention> interventions;  // applied before the step
  std::optional<Observation> observation;
  std::optional<WorldState> snapshot;  // every kSnapshotEvery steps
};

struct EpisodeLog {
  RunConfig run;
  PhysicsConstants physics;
  nlohmann::json task;  // scene before the reset-time intervention
  WorldState initial;   // after the reset-time intervention
  std::string initial_digest;
  std::optional<Observation> initial_observation;
  std::vector<LoggedIntervention> reset_interventions;
  std::vector<LogRecord> records;
};

/// One header line, then one line per control step.
void write_log(std::ostream& out, const EpisodeLog& log);
/// Throws LogError on a schema mismatch or an unreadable line.
EpisodeLog read_log(std::istream& in);

/// Runs one episode with the configured policy and curriculum.
EpisodeLog record(const RunConfig& run, const PhysicsConstants& physics = PhysicsConstants::builtin());

struct ReplayVerdict {
  bool pass = true;
  int records = 0;
  std::optional<int> first_divergence;  // step index t; -1 for the initial state
  std::string detail;
};

nlohmann::json to_json(const ReplayVerdict& v);

/// Re-executes the logged actions and interventions and compares every logged
/// digest, reward, fractional success and snapshot bitwise.
ReplayVerdict replay(const EpisodeLog& log);
/// Reads and replays. Schema mismatches throw; a line that cannot be parsed
/// is reported as a divergence at the step it would have held.
ReplayVerdict replay(std::istream& in);

}  // namespace blockbench
