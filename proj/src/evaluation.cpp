#include "blockbench/evaluation.hpp"

#include "blockbench/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

namespace blockbench {

namespace {

constexpr ProtocolVariable kAllVariables[] = {ProtocolVariable::floor_friction, ProtocolVariable::block_mass,
                                              ProtocolVariable::block_size, ProtocolVariable::block_pose,
                                              ProtocolVariable::goal_pose};

constexpr int kSampleAttempts = 10;

std::set<std::string> ids_for(const ProtocolSpec& p, const TaskInstance& task) {
  std::set<std::string> out;
  for (ProtocolVariable v : p.variables) {
    const auto ids = protocol_ids(v, task);
    out.insert(ids.begin(), ids.end());
  }
  return out;
}

// Draws the protocol's variables for one episode; retries with derived
// seeds when a draw is suppressed by the family checks.
std::optional<std::pair<TaskInstance, Intervention>> draw(const ProtocolSpec& p, const TaskInstance& base,
                                                         std::uint64_t seed, const VariableCatalog& catalog,
                                                         const PhysicsConstants& physics) {
  const std::set<std::string> ids = ids_for(p, base);
  for (int k = 0; k < kSampleAttempts; ++k) {
    const Intervention iv =
        sample_variables(base, ids, *p.space, derive_seed(seed, 0x5a3d + k), catalog, physics);
    auto r = intervene(base, iv, {}, catalog, physics);
    if (auto* t = std::get_if<TaskInstance>(&r)) return std::make_pair(std::move(*t), iv);
  }
  return std::nullopt;
}

void split_draw(const ProtocolSpec& p, const TaskInstance& base, const Intervention& iv, EpisodeRecord& rec) {
  const std::set<std::string> ids = ids_for(p, base);
  for (const auto& [id, v] : iv.assignments) (ids.count(id) ? rec.sampled : rec.implied)[id] = v;
}

EpisodeRecord run_episode(const ProtocolSpec& p, const TaskInstance& base, const PolicyFactory& factory,
                          std::uint64_t seed, const RunOptions& options, const VariableCatalog& catalog,
                          const PhysicsConstants& physics) {
  EpisodeRecord rec;
  rec.seed = seed;
  try {
    Environment env(options.env, catalog, physics);
    TaskInstance task = base;
    if (p.space && p.timestep == 0) {
      auto d = draw(p, base, seed, catalog, physics);
      if (!d) throw TaskError("no admissible draw for this episode");
      task = std::move(d->first);
      split_draw(p, base, d->second, rec);
    }
    std::unique_ptr<Policy> policy = factory(seed);
    policy->reset();
    Observation obs = env.reset(task, seed);
    while (!env.done()) {
      if (p.space && p.timestep > 0 && env.steps() == p.timestep) {
        auto d = draw(p, env.task(), seed, catalog, physics);
        if (d) {
          Intervention iv = d->second;
          iv.timing = {Timing::Kind::at_step, p.timestep};
          const InterventionOutcome out = env.do_intervention(iv);
          if (out.applied) {
            split_draw(p, base, iv, rec);
            obs = out.observation;
          }
        }
      }
      obs = env.step(policy->act(obs)).observation;
    }
    rec.score = env.fractional_success();
  } catch (const ActionError& e) {
    rec.failed = true;
    rec.failure = std::string("action: ") + e.what();
  } catch (const SimulationDiverged& e) {
    rec.failed = true;
    rec.failure = std::string("diverged: ") + e.what();
  } catch (const TaskError& e) {
    rec.failed = true;
    rec.failure = std::string("task: ") + e.what();
  }
  if (rec.failed) rec.score = 0.0;
  return rec;
}

}  // namespace

std::string to_string(ProtocolVariable v) {
  switch (v) {
    case ProtocolVariable::block_pose: return "block_pose";
    case ProtocolVariable::block_mass: return "block_mass";
    case ProtocolVariable::block_size: return "block_size";
    case ProtocolVariable::goal_pose: return "goal_pose";
    case ProtocolVariable::floor_friction: return "floor_friction";
  }
  return "block_pose";
}

std::string shorthand(ProtocolVariable v) {
  switch (v) {
    case ProtocolVariable::block_pose: return "bp";
    case ProtocolVariable::block_mass: return "bm";
    case ProtocolVariable::block_size: return "bs";
    case ProtocolVariable::goal_pose: return "gp";
    case ProtocolVariable::floor_friction: return "ff";
  }
  return "bp";
}

ProtocolVariable protocol_variable_from_string(std::string_view s) {
  for (ProtocolVariable v : kAllVariables) {
    if (to_string(v) == s || shorthand(v) == s) return v;
  }
  throw ConfigError("unknown protocol variable '" + std::string(s) + "'");
}

std::set<std::string> protocol_ids(ProtocolVariable v, const TaskInstance& task) {
  std::set<std::string> out;
  if (v == ProtocolVariable::floor_friction) {
    out.insert("floor_friction");
    return out;
  }
  const bool goal = v == ProtocolVariable::goal_pose;
  const int n = goal ? static_cast<int>(task.goal.parts.size()) : task.num_blocks();
  const char* suffix = v == ProtocolVariable::block_mass   ? ".mass"
                       : v == ProtocolVariable::block_size ? ".size"
                                                           : ".pose_cyl";
  for (int i = 0; i < n; ++i) out.insert((goal ? "goal_" : "block_") + std::to_string(i) + suffix);
  return out;
}

void ProtocolSpec::validate() const {
  if (!space && !variables.empty()) throw ConfigError("protocol " + id + ": default space samples nothing");
  if (space && variables.empty()) throw ConfigError("protocol " + id + ": no variables to sample");
  if (space == Space::AorB) throw ConfigError("protocol " + id + ": space must be A or B");
  if (timestep < 0) throw ConfigError("protocol " + id + ": negative timestep");
}

std::vector<ProtocolSpec> default_protocol_suite(Family family) {
  std::vector<ProtocolSpec> out;
  out.push_back({"P0", family, {}, std::nullopt, 0});
  int k = 1;
  for (Space s : {Space::A, Space::B}) {
    for (ProtocolVariable v : kAllVariables) out.push_back({"P" + std::to_string(k++), family, {v}, s, 0});
  }
  out.push_back({"P11", family, std::vector<ProtocolVariable>(std::begin(kAllVariables), std::end(kAllVariables)),
                 Space::B, 0});
  return out;
}

int ScoreReport::failed_count() const {
  int n = 0;
  for (const auto& e : episodes) n += e.failed ? 1 : 0;
  return n;
}

std::vector<double> ScoreReport::scores() const {
  std::vector<double> out;
  out.reserve(episodes.size());
  for (const auto& e : episodes) out.push_back(e.score);
  return out;
}

double ScoreReport::mean() const {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.score;
  return s / static_cast<double>(episodes.size());
}

ScoreReport run_protocol(const ProtocolSpec& protocol, const PolicyFactory& policy, const RunOptions& options,
                         const std::string& policy_name, const VariableCatalog& catalog,
                         const PhysicsConstants& physics) {
  protocol.validate();
  if (options.episodes < 1) throw ConfigError("episodes must be at least 1");
  const TaskInstance base = build_task(protocol.family, {}, 0, catalog, physics);

  ScoreReport report;
  report.protocol_id = protocol.id;
  report.family = protocol.family;
  report.space = protocol.space;
  report.policy = policy_name;
  report.seed = options.seed;
  report.episodes.resize(options.episodes);

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int e = next++; e < options.episodes; e = next++) {
      const std::uint64_t s = derive_seed(options.seed, static_cast<std::uint64_t>(e));
      report.episodes[e] = run_episode(protocol, base, policy, s, options, catalog, physics);
    }
  };
  const int threads = std::clamp(options.threads, 1, options.episodes);
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return report;
}

std::vector<std::string> audit_space(const ScoreReport& report, const VariableCatalog& catalog) {
  std::vector<std::string> bad;
  if (!report.space) {
    for (std::size_t e = 0; e < report.episodes.size(); ++e) {
      if (!report.episodes[e].sampled.empty()) bad.push_back("episode " + std::to_string(e) + ": sampled under P0");
    }
    return bad;
  }
  const TaskInstance base = build_task(report.family, {}, 0, catalog);
  for (std::size_t e = 0; e < report.episodes.size(); ++e) {
    const EpisodeRecord& rec = report.episodes[e];
    if (rec.sampled.empty()) continue;
    Intervention iv;
    iv.assignments = rec.implied;
    for (const auto& [id, v] : rec.sampled) iv.assignments[id] = v;
    auto r = intervene(base, iv, {}, catalog);
    const auto* t = std::get_if<TaskInstance>(&r);
    if (!t) {
      bad.push_back("episode " + std::to_string(e) + ": recorded draw is not admissible");
      continue;
    }
    for (const auto& [id, v] : rec.sampled) {
      if (!space_membership(catalog, id, v, *report.space, &t->config)) {
        bad.push_back("episode " + std::to_string(e) + ": " + id + " outside " + to_string(*report.space));
      }
    }
  }
  return bad;
}

BenchmarkTable aggregate_report(const std::vector<ScoreReport>& reports) {
  if (reports.empty()) throw AggregationError("no reports to aggregate");
  BenchmarkTable t;
  t.family = reports.front().family;
  std::vector<std::vector<double>> means;
  for (const ScoreReport& r : reports) {
    if (r.family != t.family) {
      throw AggregationError("mixed families: " + to_string(t.family) + " and " + to_string(r.family));
    }
    auto it = std::find_if(t.rows.begin(), t.rows.end(),
                           [&](const BenchmarkRow& row) { return row.protocol_id == r.protocol_id; });
    if (it == t.rows.end()) {
      t.rows.push_back({r.protocol_id, 0, 0.0, 0.0, 0, 0});
      means.emplace_back();
      it = t.rows.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - t.rows.begin());
    means[idx].push_back(r.mean());
    it->reports += 1;
    it->episodes += static_cast<int>(r.episodes.size());
    it->failed += r.failed_count();
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& m = means[i];
    double s = 0.0;
    for (double x : m) s += x;
    const double mean = s / static_cast<double>(m.size());
    double ss = 0.0;
    for (double x : m) ss += (x - mean) * (x - mean);
    t.rows[i].mean = mean;
    t.rows[i].std = m.size() > 1 ? std::sqrt(ss / static_cast<double>(m.size() - 1)) : 0.0;
  }
  return t;
}

nlohmann::json to_json(const ProtocolSpec& p) {
  nlohmann::json vars = nlohmann::json::array();
  for (ProtocolVariable v : p.variables) vars.push_back(shorthand(v));
  return {{"id", p.id},
          {"family", to_string(p.family)},
          {"variables", vars},
          {"space", p.space ? to_string(*p.space) : "default"},
          {"timestep", p.timestep},
          {"suite_version", kProtocolSuiteVersion}};
}

ProtocolSpec protocol_from_json(const nlohmann::json& j) {
  try {
    ProtocolSpec p;
    p.id = j.at("id").get<std::string>();
    p.family = family_from_string(j.at("family").get<std::string>());
    for (const auto& v : j.value("variables", nlohmann::json::array())) {
      p.variables.push_back(protocol_variable_from_string(v.get<std::string>()));
    }
    const std::string space = j.value("space", std::string("default"));
    if (space != "default") p.space = space_from_string(space);
    p.timestep = j.value("timestep", 0);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("protocol: ") + e.what());
  }
}

nlohmann::json to_json(const ScoreReport& r) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : r.episodes) {
    nlohmann::json je = {{"seed", e.seed},
                         {"score", e.score},
                         {"failed", e.failed},
                         {"sampled", e.sampled},
                         {"implied", e.implied}};
    if (e.failed) je["failure"] = e.failure;
    eps.push_back(je);
  }
  return {{"protocol", r.protocol_id},
          {"family", to_string(r.family)},
          {"space", r.space ? to_string(*r.space) : "default"},
          {"policy", r.policy},
          {"seed", r.seed},
          {"episodes", r.episodes.size()},
          {"failed", r.failed_count()},
          {"mean_final_fractional_success", r.mean()},
          {"per_episode", eps},
          {"suite_version", kProtocolSuiteVersion}};
}

ScoreReport report_from_json(const nlohmann::json& j) {
  try {
    ScoreReport r;
    r.protocol_id = j.at("protocol").get<std::string>();
    r.family = family_from_string(j.at("family").get<std::string>());
    const std::string space = j.at("space").get<std::string>();
    if (space != "default") r.space = space_from_string(space);
    r.policy = j.value("policy", std::string());
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& je : j.at("per_episode")) {
      EpisodeRecord e;
      e.seed = je.at("seed").get<std::uint64_t>();
      e.score = je.at("score").get<double>();
      e.failed = je.at("failed").get<bool>();
      e.failure = je.value("failure", std::string());
      e.sampled = je.at("sampled").get<std::map<std::string, Values>>();
      e.implied = je.value("implied", std::map<std::string, Values>{});
      r.episodes.push_back(std::move(e));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("score report: ") + e.what());
  }
}

nlohmann::json to_json(const BenchmarkTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"protocol", r.protocol_id},
                    {"reports", r.reports},
                    {"mean", r.mean},
                    {"std", r.std},
                    {"episodes", r.episodes},
                    {"failed", r.failed}});
  }
  return {{"family", to_string(t.family)}, {"suite_version", kProtocolSuiteVersion}, {"rows", rows}};
}

std::string to_csv(const BenchmarkTable& t) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "family,protocol,reports,mean,std,episodes,failed\n";
  for (const auto& r : t.rows) {
    out << to_string(t.family) << ',' << r.protocol_id << ',' << r.reports << ',' << r.mean << ',' << r.std << ','
        << r.episodes << ',' << r.failed << '\n';
  }
  return out.str();
}

std::string to_csv(const ScoreReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "protocol,episode,seed,score,failed\n";
  for (std::size_t e = 0; e < r.episodes.size(); ++e) {
    out << r.protocol_id << ',' << e << ',' << r.episodes[e].seed << ',' << r.episodes[e].score << ','
        << (r.episodes[e].failed ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace blockbench
