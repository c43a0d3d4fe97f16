#include "mfac/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mfac/errors.hpp"
#include "mfac/io.hpp"
#include "mfac/ltde.hpp"
#include "mfac/oracle.hpp"
#include "mfac/verify.hpp"

#ifndef MFAC_VERSION
#define MFAC_VERSION "0.0.0"
#endif

namespace mfac {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) { return format_double(v); }

std::vector<std::string> count_columns(const StateGraph& graph, const std::string& prefix) {
  std::vector<std::string> cols;
  for (int id : graph.ids()) cols.push_back(prefix + std::to_string(id));
  return cols;
}

std::vector<std::string> action_columns(const StateGraph& graph, const ModelSpec& model) {
  std::vector<std::string> cols;
  for (int id : graph.ids())
    for (const auto& a : model.actions) cols.push_back("h_" + std::to_string(id) + "_" + a);
  return cols;
}

void append_counts(std::vector<std::string>& row, const EmpiricalStateDist& mu) {
  for (int c : mu.counts()) row.push_back(std::to_string(c));
}

void append_counts(std::vector<std::string>& row, const TeamActionDist& h) {
  for (int c : h.flat()) row.push_back(std::to_string(c));
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Json instance_json(const Instance& inst) {
  Json edges = Json::array();
  for (const auto& [a, b] : inst.graph.edges())
    edges.push_back({inst.graph.ids()[a], inst.graph.ids()[b]});
  Json initial = Json::array();
  for (std::size_t i = 0; i < inst.initial.support.size(); ++i)
    initial.push_back({{"counts", inst.initial.support[i].counts()}, {"prob", inst.initial.probs[i]}});
  Json j;
  j["states"] = inst.graph.ids();
  j["edges"] = edges;
  j["diameter"] = inst.graph.diameter();
  j["actions"] = inst.model.actions;
  j["n_agents"] = inst.model.n_agents;
  j["gamma"] = inst.model.gamma;
  j["r_max"] = inst.model.r_max;
  j["components"] = Json::parse(inst.model.description);
  j["initial"] = initial;
  return j;
}

Json base_manifest(const std::string& command, const Json& config, const Instance& inst) {
  Json m;
  m["command"] = command;
  m["version"] = version_string();
  m["config"] = config;
  Json sizes = instance_json(inst);
  sizes["model_hash"] = sha256_hex(sizes.dump());
  m["instance"] = sizes;
  return m;
}

Instance validated_instance(const Json& config) {
  Instance inst = build_instance(config);
  validate_model(inst.model, inst.graph, config.at("model").at("validation_cap").get<double>());
  return inst;
}

std::uint64_t config_seed(const Json& config) { return config.at("seed").get<std::uint64_t>(); }

void write_params(RunDirectory& dir, const std::string& prefix, const EnergyPolicyParams& params,
                  const StateGraph& graph) {
  for (StateIndex s = 0; s < params.nets.size(); ++s) {
    const std::string stem = prefix + "/net_" + std::to_string(graph.ids()[s]);
    dir.write(stem + ".json", params.nets[s].to_json() + "\n");
    std::ostringstream bin(std::ios::binary);
    params.nets[s].write_binary(bin);
    dir.write(stem + ".bin", bin.str());
  }
  dir.write(prefix + "/policy.json", Json({{"tau", params.tau}}).dump(2) + "\n");
}

}  // namespace

std::string version_string() { return MFAC_VERSION; }

CoupledTrajectory simulate_coupled(const Instance& instance, const PolicyTable& table,
                                   const std::optional<IndividualPolicy>& individual, int steps,
                                   std::uint64_t seed) {
  if (steps < 0) throw ConfigError("simulate.steps must be non-negative");
  const ModelSpec& model = instance.model;
  const StateGraph& graph = instance.graph;
  const std::size_t nS = graph.size();
  const std::size_t nA = model.n_actions();

  CoupledTrajectory out;
  Rng team_rng(seed);
  Rng agent_rng(seed);

  EmpiricalStateDist mu = instance.initial.sample(team_rng);
  out.team_mu.push_back(mu);
  for (int t = 0; t < steps; ++t) {
    TeamActionDist h = individual ? sample_team_action(*individual, mu, nA, team_rng)
                                  : table.sample(mu, team_rng);
    out.team_reward.push_back(global_stage_reward(model, graph, mu, h));
    mu = team_sample_step(model, graph, mu, h, team_rng);
    out.team_h.push_back(std::move(h));
    out.team_mu.push_back(mu);
  }

  // Agents are numbered in state order of the initial occupancy.
  const EmpiricalStateDist mu0 = instance.initial.sample(agent_rng);
  std::vector<StateIndex> states;
  for (StateIndex s = 0; s < nS; ++s)
    for (int i = 0; i < mu0.count(s); ++i) states.push_back(s);
  const std::size_t n = states.size();
  out.agent_mu.push_back(mu0);

  for (int t = 0; t < steps; ++t) {
    const EmpiricalStateDist cur = out.agent_mu.back();
    std::vector<std::size_t> actions(n, 0);
    if (individual) {
      for (StateIndex s = 0; s < nS; ++s) {
        if (cur.count(s) == 0) continue;
        const auto probs = (*individual)(s, cur.count(s), model.n_agents);
        for (std::size_t i = 0; i < n; ++i)
          if (states[i] == s) actions[i] = sample_categorical(probs, agent_rng);
      }
    } else {
      const TeamActionDist h = table.sample(cur, agent_rng);
      for (StateIndex s = 0; s < nS; ++s) {
        std::size_t a = 0;
        int left = h.count(s, 0);
        for (std::size_t i = 0; i < n; ++i) {
          if (states[i] != s) continue;
          while (left == 0) left = h.count(s, ++a);
          actions[i] = a;
          --left;
        }
      }
    }

    // Step agents in (state, action, id) order, which is the order the team
    // step uses for its canonical profile.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::pair(states[a], actions[a]) < std::pair(states[b], actions[b]);
    });
    AgentProfile sorted;
    for (std::size_t i : order) {
      sorted.states.push_back(states[i]);
      sorted.actions.push_back(actions[i]);
    }
    const AgentStepResult step = agent_step(model, graph, sorted, agent_rng);

    AgentProfile taken{states, actions};
    std::vector<double> rewards(n);
    for (std::size_t j = 0; j < n; ++j) {
      rewards[order[j]] = step.rewards[j];
      states[order[j]] = step.next.states[j];
    }
    out.agents.push_back(std::move(taken));
    out.agent_rewards.push_back(std::move(rewards));
    out.agent_mu.push_back(empirical_of(AgentProfile{states, {}}, nS));
  }
  return out;
}

std::filesystem::path cmd_simulate(const Json& config) {
  const Instance inst = validated_instance(config);
  const std::uint64_t seed = config_seed(config);
  const double cap = config.at("oracle").at("candidate_cap").get<double>();
  const auto policy = build_policy(config.at("policy"), inst, seed, cap);
  const PolicyTable table(*policy);
  const auto individual = build_individual_policy(config.at("policy"), inst);
  const int steps = config.at("simulate").at("steps").get<int>();

  const auto start = Clock::now();
  const CoupledTrajectory traj =
      simulate_coupled(inst, table, individual, steps, derive_seed(seed, 11));

  RunDirectory dir(resolve_output_dir(config, "simulate"));
  const StateGraph& g = inst.graph;

  CsvWriter team(concat(concat({"t"}, count_columns(g, "n_")), concat(action_columns(g, inst.model), {"reward"})));
  for (int t = 0; t < steps; ++t) {
    std::vector<std::string> row{std::to_string(t)};
    append_counts(row, traj.team_mu[t]);
    append_counts(row, traj.team_h[t]);
    row.push_back(fmt(traj.team_reward[t]));
    team.row(row);
  }
  dir.write("team.csv", team.str());

  CsvWriter agents({"t", "agent", "state", "action", "reward"});
  CsvWriter agent_counts(concat(concat({"t"}, count_columns(g, "n_")), {"mean_reward"}));
  bool identical = true;
  for (int t = 0; t < steps; ++t) {
    const auto& prof = traj.agents[t];
    double total = 0.0;
    for (std::size_t i = 0; i < prof.states.size(); ++i) {
      agents.row({std::to_string(t), std::to_string(i), std::to_string(g.ids()[prof.states[i]]),
                  inst.model.actions[prof.actions[i]], fmt(traj.agent_rewards[t][i])});
      total += traj.agent_rewards[t][i];
    }
    std::vector<std::string> row{std::to_string(t)};
    append_counts(row, traj.agent_mu[t]);
    row.push_back(fmt(total / static_cast<double>(prof.states.size())));
    agent_counts.row(row);
  }
  for (std::size_t t = 0; t < traj.team_mu.size(); ++t)
    identical = identical && traj.team_mu[t] == traj.agent_mu[t];
  dir.write("agents.csv", agents.str());
  dir.write("agent_counts.csv", agent_counts.str());

  Json summary;
  summary["steps"] = steps;
  summary["final_team_counts"] = traj.team_mu.back().counts();
  summary["final_agent_counts"] = traj.agent_mu.back().counts();
  summary["coupled_occupancy_identical"] = identical;
  dir.write("simulate.json", summary.dump(2) + "\n");

  Json manifest = base_manifest("simulate", config, inst);
  dir.write_manifest(manifest);
  write_file_atomic(dir.path() / "timings.json",
                    Json({{"total_seconds", seconds_since(start)}}).dump(2) + "\n");
  return dir.path();
}

std::filesystem::path cmd_oracle(const Json& config) {
  const Instance inst = validated_instance(config);
  const Json& oc = config.at("oracle");
  const double tol = oc.at("tol").get<double>();
  const auto start = Clock::now();

  const ExactOracle oracle(inst.model, inst.graph, oc.at("xi_cap").get<double>());
  const auto policy =
      build_policy(config.at("policy"), inst, config_seed(config), oc.at("candidate_cap").get<double>());
  const PolicyTable table(*policy);
  const auto pi_w = oracle.policy_weights(table);
  const XiSpace& xi = oracle.xi();
  const StateGraph& g = inst.graph;
  const std::size_t nS = g.size();

  std::vector<std::vector<double>> q(nS);
  for (StateIndex s = 0; s < nS; ++s) q[s] = oracle.exact_team_q(pi_w, s, tol);
  const auto q_opt = oracle.exact_optimal_q(tol);
  const auto v = oracle.exact_team_value(pi_w, tol);
  const auto nu = oracle.exact_stationary(pi_w, inst.initial, oc.at("stationary_tol").get<double>(),
                                          oc.at("stationary_max_iter").get<std::size_t>());
  const auto sigma = oracle.exact_visitation(pi_w, inst.initial, inst.model.gamma,
                                             oc.at("visitation_tol").get<double>());

  RunDirectory dir(resolve_output_dir(config, "oracle"));

  CsvWriter xi_csv(concat(concat({"xi", "mu_index"}, count_columns(g, "n_")), action_columns(g, inst.model)));
  CsvWriter tables(concat(concat({"xi"}, count_columns(g, "q_")),
                          {"q_total", "q_opt", "reward", "pi", "nu", "sigma"}));
  double decomposition_gap = 0.0;
  std::vector<double> v_from_q(xi.n_mus(), 0.0);
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const std::size_t m = xi.mu_of(i);
    std::vector<std::string> row{std::to_string(i), std::to_string(m)};
    append_counts(row, xi.mu(m));
    append_counts(row, xi.h(i));
    xi_csv.row(row);

    std::vector<std::string> trow{std::to_string(i)};
    double total = 0.0;
    for (StateIndex s = 0; s < nS; ++s) {
      trow.push_back(fmt(q[s][i]));
      total += q[s][i];
    }
    v_from_q[m] += pi_w[i] * total;
    trow.push_back(fmt(total));
    trow.push_back(fmt(q_opt[i]));
    trow.push_back(fmt(oracle.global_reward()[i]));
    trow.push_back(fmt(pi_w[i]));
    trow.push_back(fmt(nu[i]));
    trow.push_back(fmt(sigma[i]));
    tables.row(trow);
  }
  CsvWriter values(concat(concat({"mu_index"}, count_columns(g, "n_")), {"v", "v_from_q"}));
  for (std::size_t m = 0; m < xi.n_mus(); ++m) {
    std::vector<std::string> row{std::to_string(m)};
    append_counts(row, xi.mu(m));
    row.push_back(fmt(v[m]));
    row.push_back(fmt(v_from_q[m]));
    values.row(row);
    decomposition_gap = std::max(decomposition_gap, std::abs(v[m] - v_from_q[m]));
  }
  dir.write("xi.csv", xi_csv.str());
  dir.write("tables.csv", tables.str());
  dir.write("values.csv", values.str());

  Json summary;
  summary["xi_size"] = xi.size();
  summary["n_state_distributions"] = xi.n_mus();
  summary["transition_nonzeros"] = oracle.transition_nonzeros();
  summary["j"] = oracle.exact_j(pi_w, inst.initial, tol);
  summary["j_upper_bound"] = oracle.optimal_j(inst.initial, tol);
  summary["value_decomposition_max_gap"] = decomposition_gap;
  summary["tolerances"] = {{"q", tol},
                           {"stationary", oc.at("stationary_tol")},
                           {"visitation", oc.at("visitation_tol")}};
  dir.write("oracle.json", summary.dump(2) + "\n");

  Json manifest = base_manifest("oracle", config, inst);
  manifest["sizes"] = {{"xi", xi.size()}, {"state_distributions", xi.n_mus()}};
  dir.write_manifest(manifest);
  write_file_atomic(dir.path() / "timings.json",
                    Json({{"total_seconds", seconds_since(start)}}).dump(2) + "\n");
  return dir.path();
}

std::filesystem::path cmd_train(const Json& config, std::ostream* progress) {
  const Instance inst = validated_instance(config);
  const Json& training = config.at("training");
  const Json& oc = config.at("oracle");
  ActorConfig cfg = build_actor_config(training);
  cfg.candidate_cap = oc.at("candidate_cap").get<double>();
  const std::uint64_t seed = config_seed(config);
  const bool wall = training.at("record_wall_time").get<bool>();
  const StateGraph& g = inst.graph;

  std::unique_ptr<ExactOracle> oracle;
  const double xi_cap = oc.at("xi_cap").get<double>();
  if (training.at("use_oracle").get<bool>() &&
      XiSpace::size_bound(g.size(), inst.model.n_actions(), inst.model.n_agents) <= xi_cap)
    oracle = std::make_unique<ExactOracle>(inst.model, g, xi_cap);

  RunDirectory dir(resolve_output_dir(config, "train"));
  const auto start = Clock::now();
  auto report = [&](const ActorIterate& it) {
    if (progress == nullptr) return;
    *progress << "iteration " << it.iteration;
    if (it.j) *progress << "  J=" << fmt(*it.j);
    *progress << "\n" << std::flush;
  };
  const ActorResult result = actor_train(inst.model, g, inst.initial, cfg, seed, oracle.get(), report);

  std::vector<std::string> header{"iteration"};
  for (const auto& c : count_columns(g, "critic_loss_")) header.push_back(c);
  header.push_back("j");
  if (wall) header.push_back("wall_seconds");
  CsvWriter log(header);
  Json timings = Json::array();
  for (const auto& it : result.log) {
    std::vector<std::string> row{std::to_string(it.iteration)};
    for (StateIndex s = 0; s < g.size(); ++s)
      row.push_back(s < it.critic_loss.size() ? fmt(it.critic_loss[s]) : "");
    row.push_back(it.j ? fmt(*it.j) : "");
    if (wall) row.push_back(fmt(it.wall_seconds));
    log.row(row);
    timings.push_back({{"iteration", it.iteration}, {"seconds", it.wall_seconds}});
  }
  dir.write("train_log.csv", log.str());
  write_params(dir, "checkpoints/initial", result.initial, g);
  write_params(dir, "checkpoints/final", result.final_params, g);
  write_params(dir, "checkpoints/best", result.best, g);

  Json summary;
  summary["j_source"] = oracle ? "exact" : "monte_carlo";
  summary["iterations"] = cfg.iterations;
  summary["actor_step_size"] = cfg.resolved_step_size();
  summary["critic_step_size"] = cfg.critic.resolved_step_size(inst.model.gamma);
  summary["j_initial"] = result.log.front().j ? Json(*result.log.front().j) : Json();
  summary["j_final"] = result.log.back().j ? Json(*result.log.back().j) : Json();
  summary["best_j"] = result.best_j ? Json(*result.best_j) : Json();
  summary["best_iteration"] = result.best_iteration ? Json(*result.best_iteration) : Json();
  if (oracle) summary["j_upper_bound"] = oracle->optimal_j(inst.initial, oc.at("tol").get<double>());
  dir.write("train.json", summary.dump(2) + "\n");

  Json manifest = base_manifest("train", config, inst);
  if (oracle) manifest["sizes"] = {{"xi", oracle->xi().size()}};
  Json dims = Json::array();
  for (StateIndex s = 0; s < g.size(); ++s)
    dims.push_back({{"state", g.ids()[s]},
                    {"critic_input_dim", encoded_dim(g.hop_members(s, cfg.k).size(), inst.model.n_actions())},
                    {"actor_input_dim", 1 + inst.model.n_actions()}});
  manifest["window_dims"] = dims;
  dir.write_manifest(manifest);
  write_file_atomic(dir.path() / "timings.json",
                    Json({{"total_seconds", seconds_since(start)}, {"iterations", timings}}).dump(2) +
                        "\n");
  return dir.path();
}

std::filesystem::path cmd_export(const Json& config) {
  const auto input = config.at("export").at("input").get<std::string>();
  if (input.empty()) throw ConfigError("export.input must name a run directory");
  if (!std::filesystem::is_directory(input))
    throw IoError("export input '" + input + "' is not a directory");
  std::vector<std::filesystem::path> csvs;
  for (const auto& entry : std::filesystem::directory_iterator(input))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") csvs.push_back(entry.path());
  std::sort(csvs.begin(), csvs.end());
  if (csvs.empty()) throw IoError("no CSV files in '" + input + "'");

  RunDirectory dir(resolve_output_dir(config, "export"));
  Json files = Json::array();
  for (const auto& path : csvs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line, text;
    bool header = true;
    while (std::getline(in, line)) {
      std::string cells;
      std::stringstream parts(line);
      std::string cell;
      bool first = true;
      while (std::getline(parts, cell, ',')) {
        if (!first) cells += ' ';
        cells += cell.empty() ? "NaN" : cell;
        first = false;
      }
      if (!line.empty() && line.back() == ',') cells += " NaN";
      text += (header ? "# " : "") + cells + "\n";
      header = false;
    }
    const std::string name = path.stem().string() + ".dat";
    dir.write(name, text);
    files.push_back({{"source", path.filename().string()}, {"output", name}});
  }
  Json manifest;
  manifest["command"] = "export";
  manifest["version"] = version_string();
  manifest["config"] = config;
  manifest["converted"] = files;
  dir.write_manifest(manifest);
  return dir.path();
}

VerifyOutcome cmd_verify(const Json& config, std::ostream* progress) {
  VerifyOutcome outcome;
  const Instance inst = build_instance(config);
  Json report;
  report["version"] = version_string();
  report["instance"] = instance_json(inst);

  Json validation;
  try {
    validate_model(inst.model, inst.graph, config.at("model").at("validation_cap").get<double>());
    validation["passed"] = true;
  } catch (const ModelError& e) {
    validation["passed"] = false;
    validation["error"] = e.what();
    outcome.model_valid = false;
  }
  report["model_validation"] = validation;

  Json criteria = Json::array();
  Json timings = Json::object();
  bool all = outcome.model_valid;
  if (outcome.model_valid) {
    const bool enforce = config.at("verify").at("enforce_runtime").get<bool>();
    for (const auto& idj : config.at("verify").at("criteria")) {
      const int id = idj.get<int>();
      if (id < 1 || id > kCriterionCount)
        throw ConfigError("verify.criteria holds unknown criterion " + std::to_string(id));
      CriterionResult r = run_criterion(id, config);
      if (!enforce) r.runtime_exceeded = false;
      if (r.runtime_exceeded) r.passed = false;
      all = all && r.passed;
      if (progress != nullptr)
        *progress << "criterion " << id << " " << (r.passed ? "PASS" : "FAIL") << "  " << r.name
                  << "\n" << std::flush;
      criteria.push_back(criterion_json(r));
      timings[std::to_string(id)] = {{"seconds", r.seconds}, {"limit_seconds", r.limit_seconds}};
    }
  }
  report["criteria"] = criteria;
  report["passed"] = all;

  RunDirectory dir(resolve_output_dir(config, "verify"));
  dir.write("report.json", report.dump(2) + "\n");
  Json manifest = base_manifest("verify", config, inst);
  dir.write_manifest(manifest);
  write_file_atomic(dir.path() / "timings.json", timings.dump(2) + "\n");

  outcome.dir = dir.path();
  outcome.report = std::move(report);
  outcome.passed = all;
  return outcome;
}

int exit_code_for_current_exception(std::string& message) {
  try {
    throw;
  } catch (const ConfigError& e) {
    message = std::string("configuration error: ") + e.what();
    return kExitConfig;
  } catch (const CapExceeded& e) {
    message = std::string("enumeration cap exceeded: ") + e.what();
    return kExitCap;
  } catch (const ModelError& e) {
    message = std::string("model validation failed: ") + e.what();
    return kExitModel;
  } catch (const NonConvergence& e) {
    message = std::string("no convergence: ") + e.what();
    return kExitNonConvergence;
  } catch (const IoError& e) {
    message = std::string("I/O error: ") + e.what();
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    message = std::string("I/O error: ") + e.what();
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    message = std::string("configuration error: ") + e.what();
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    message = std::string("invalid input: ") + e.what();
    return kExitConfig;
  } catch (const std::exception& e) {
    message = std::string("internal error: ") + e.what();
    return kExitInternal;
  }
}

int run_command(const std::string& name, const Json& config, std::ostream& out,
                std::ostream& err) {
  try {
    if (name == "simulate") {
      out << cmd_simulate(config).string() << "\n";
    } else if (name == "oracle") {
      out << cmd_oracle(config).string() << "\n";
    } else if (name == "train") {
      out << cmd_train(config, &out).string() << "\n";
    } else if (name == "export") {
      out << cmd_export(config).string() << "\n";
    } else if (name == "verify") {
      const VerifyOutcome v = cmd_verify(config, &out);
      out << v.dir.string() << "\n";
      if (!v.model_valid) {
        err << "model validation failed: "
            << v.report.at("model_validation").at("error").get<std::string>() << "\n";
        return kExitModel;
      }
      if (!v.passed) {
        err << "verification failed\n";
        return kExitVerifyFailed;
      }
    } else {
      err << "unknown command '" << name << "'\n";
      return kExitConfig;
    }
    return kExitOk;
  } catch (...) {
    std::string message;
    const int code = exit_code_for_current_exception(message);
    err << message << "\n";
    return code;
  }
}

}  // namespace mfac
