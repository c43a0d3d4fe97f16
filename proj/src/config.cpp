#include "mfac/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mfac/errors.hpp"

namespace mfac {

namespace {

// Objects whose keys depend on their "type" member; path -> type -> defaults.
const std::map<std::string, std::map<std::string, Json>>& variants() {
  static const std::map<std::string, std::map<std::string, Json>> table = {
      {"graph",
       {{"line", {{"type", "line"}, {"n", 3}}},
        {"custom", {{"type", "custom"}, {"ids", Json::array()}, {"edges", Json::array()}}}}},
      {"model.reward",
       {{"congestion", {{"type", "congestion"}, {"offset", 1.0}, {"slope", 1.0}}},
        {"constant", {{"type", "constant"}, {"value", 0.5}}},
        {"action_indicator", {{"type", "action_indicator"}, {"action", 0}, {"value", 1.0}}}}},
      {"model.kernel",
       {{"stay_spread", {{"type", "stay_spread"}, {"stay_action", 0}}},
        {"crowd_averse", {{"type", "crowd_averse"}, {"stay_action", 0}, {"move_prob", 0.5}}},
        {"uniform_global", {{"type", "uniform_global"}}}}},
      {"model.initial",
       {{"even", {{"type", "even"}}},
        {"counts", {{"type", "counts"}, {"counts", Json::array()}}},
        {"mixture", {{"type", "mixture"}, {"support", Json::array()}, {"probs", Json::array()}}}}},
      {"policy",
       {{"uniform", {{"type", "uniform"}}},
        {"table", {{"type", "table"}, {"probs", Json::array()}}},
        {"logistic", {{"type", "logistic"}, {"bias", 0.0}, {"slope", 1.0}}},
        {"energy",
         {{"type", "energy"}, {"width", 16}, {"radius", 10.0}, {"tau", 2.0}, {"seed", nullptr}}}}},
  };
  return table;
}

bool compatible(const Json& def, const Json& value) {
  if (def.is_null()) return value.is_null() || value.is_number();
  if (def.is_number_integer()) return value.is_number_integer();
  if (def.is_number()) return value.is_number();
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_string()) return value.is_string();
  if (def.is_array()) return value.is_array();
  if (def.is_object()) return value.is_object();
  return false;
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void merge_into(Json& base, const Json& user, const std::string& path);

Json merge_variant(const Json& current, const Json& user, const std::string& path) {
  const auto& types = variants().at(path);
  std::string type = current.at("type").get<std::string>();
  if (user.contains("type")) {
    if (!user.at("type").is_string()) throw ConfigError(path + ".type must be a string");
    type = user.at("type").get<std::string>();
  }
  auto it = types.find(type);
  if (it == types.end()) {
    std::string known;
    for (const auto& [name, _] : types) known += (known.empty() ? "" : ", ") + name;
    throw ConfigError("unknown " + path + ".type '" + type + "' (expected one of: " + known + ")");
  }
  Json out = it->second;
  merge_into(out, user, path);
  return out;
}

void merge_into(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = join(path, key);
    if (!base.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    Json& slot = base[key];
    if (variants().count(here)) {
      if (!value.is_object()) throw ConfigError(here + " must be an object");
      slot = merge_variant(slot, value, here);
    } else if (slot.is_object()) {
      merge_into(slot, value, here);
    } else {
      if (!compatible(slot, value))
        throw ConfigError("config key '" + here + "' has the wrong type (default is " +
                          slot.dump() + ", got " + value.dump() + ")");
      slot = value;
    }
  }
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

Json default_config() {
  Json c;
  c["seed"] = 7;
  c["output_dir"] = "";
  c["graph"] = variants().at("graph").at("line");
  Json model;
  model["actions"] = {"stay", "move"};
  model["gamma"] = 0.5;
  model["n_agents"] = 4;
  model["r_max"] = 1.0;
  model["reward"] = variants().at("model.reward").at("congestion");
  model["kernel"] = variants().at("model.kernel").at("stay_spread");
  model["initial"] = variants().at("model.initial").at("even");
  model["validation_cap"] = 200000.0;
  c["model"] = model;
  c["policy"] = variants().at("policy").at("uniform");
  c["simulate"] = {{"steps", 100}};
  c["oracle"] = {{"xi_cap", 200000.0},         {"tol", 1e-8},
                 {"stationary_tol", 1e-10},    {"stationary_max_iter", 1000000},
                 {"visitation_tol", 1e-10},    {"candidate_cap", 20000.0}};
  Json actor = {{"width", 16},        {"radius", 10.0},    {"tau", 2.0},
                {"iterations", 50},   {"step_size", nullptr}, {"batch", 256},
                {"k", 1},             {"warmup_restarts", 10.0}, {"mc_rollouts", 100},
                {"mc_every", 10}};
  Json critic = {{"width", 128},       {"radius", 10.0}, {"iterations", 5000},
                 {"step_size", nullptr}, {"burn_in", 200}, {"thinning", 1}};
  c["training"] = {{"use_oracle", true}, {"record_wall_time", false}, {"actor", actor},
                   {"critic", critic}};
  Json verify;
  verify["criteria"] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  verify["enforce_runtime"] = true;
  verify["lift_trials"] = 100;
  verify["mc_rollouts"] = 100000;
  verify["mc_horizon"] = 40;
  verify["contraction_pairs"] = 100;
  verify["random_policies"] = 5;
  verify["policy_width"] = 8;
  verify["policy_tau"] = 1.0;
  verify["grad_trials"] = 5;
  verify["grad_width"] = 4;
  verify["fd_step"] = 1e-5;
  verify["sampler_samples"] = 100000;
  verify["sampler_burn_in"] = 200;
  verify["critic"] = {{"width", 512},        {"small_width", 32},  {"iterations", 20000},
                      {"step_size", 0.25},   {"radius", 10.0},     {"seed", 12345},
                      {"tolerance", 0.1},    {"constant_tolerance", 0.05}};
  verify["actor"] = {{"iterations", 50},      {"batch", 256},        {"width", 256},
                     {"radius", 10.0},        {"tau", 2.0},          {"step_size", 6.0},
                     {"critic_width", 128},   {"critic_iterations", 5000},
                     {"critic_step_size", 0.25}, {"seed", 7},        {"kappa", 1.0},
                     {"k0_margin", 0.02}};
  c["verify"] = verify;
  c["export"] = {{"input", ""}};
  return c;
}

void apply_assignment(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &doc;
  const auto parts = split(key, '.');
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("empty segment in --set key '" + key + "'");
    if (node->is_null()) *node = Json::object();
    if (!node->is_object()) throw ConfigError("--set key '" + key + "' descends into a non-object");
    if (i + 1 == parts.size())
      (*node)[parts[i]] = value;
    else
      node = &(*node)[parts[i]];
  }
}

Json resolve_config(Json user, const Overrides& overrides) {
  if (user.is_null()) user = Json::object();
  for (const auto& a : overrides.set) apply_assignment(user, a);
  if (overrides.seed) user["seed"] = *overrides.seed;
  if (overrides.out) user["output_dir"] = *overrides.out;
  Json resolved = default_config();
  merge_into(resolved, user, "");
  return resolved;
}

Json load_config(const std::string& path, const Overrides& overrides) {
  Json user = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    user = Json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  }
  return resolve_config(std::move(user), overrides);
}

StateGraph build_graph(const Json& graph) {
  const auto type = get<std::string>(graph, "type");
  try {
    if (type == "line") {
      const int n = get<int>(graph, "n");
      if (n < 1) throw ConfigError("graph.n must be at least 1");
      return line_graph(n);
    }
    const auto ids = get<std::vector<int>>(graph, "ids");
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : graph.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("graph.edges entries must be [a, b]");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    return StateGraph(ids, edges);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
}

ModelSpec build_model(const Json& model, const StateGraph& graph) {
  ModelSpec m;
  m.actions = get<std::vector<std::string>>(model, "actions");
  m.gamma = get<double>(model, "gamma");
  m.n_agents = get<int>(model, "n_agents");
  m.r_max = get<double>(model, "r_max");
  if (m.actions.empty()) throw ConfigError("model.actions must not be empty");
  const std::size_t n = graph.size();

  const Json& reward = model.at("reward");
  const auto rtype = get<std::string>(reward, "type");
  if (rtype == "congestion")
    m.reward = congestion_reward(get<double>(reward, "offset"), get<double>(reward, "slope"));
  else if (rtype == "constant")
    m.reward = constant_reward(get<double>(reward, "value"));
  else
    m.reward = action_indicator_reward(get<std::size_t>(reward, "action"), get<double>(reward, "value"));

  const Json& kernel = model.at("kernel");
  const auto ktype = get<std::string>(kernel, "type");
  if (ktype == "stay_spread") {
    m.kernel = stay_spread_kernel(n, get<std::size_t>(kernel, "stay_action"));
  } else if (ktype == "crowd_averse") {
    const double p = get<double>(kernel, "move_prob");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("model.kernel.move_prob must lie in [0, 1]");
    m.kernel = crowd_averse_kernel(n, get<std::size_t>(kernel, "stay_action"), p);
  } else {
    m.kernel = uniform_global_kernel(n);
  }
  if (kernel.contains("stay_action") && get<std::size_t>(kernel, "stay_action") >= m.actions.size())
    throw ConfigError("model.kernel.stay_action is not an action index");
  if (reward.contains("action") && get<std::size_t>(reward, "action") >= m.actions.size())
    throw ConfigError("model.reward.action is not an action index");

  Json desc;
  desc["reward"] = reward;
  desc["kernel"] = kernel;
  m.description = desc.dump();
  return m;
}

InitialDistribution build_initial(const Json& initial, const StateGraph& graph, int n_agents) {
  const auto type = get<std::string>(initial, "type");
  const std::size_t n = graph.size();
  auto make = [&](const std::vector<int>& counts) {
    if (counts.size() != n)
      throw ConfigError("initial counts need one entry per state (" + std::to_string(n) + ")");
    int total = 0;
    for (int c : counts) total += c;
    if (total != n_agents)
      throw ConfigError("initial counts sum to " + std::to_string(total) + ", expected " +
                        std::to_string(n_agents));
    try {
      return EmpiricalStateDist(counts);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("initial counts: ") + e.what());
    }
  };
  if (type == "even") {
    std::vector<int> counts(n, n_agents / static_cast<int>(n));
    for (std::size_t s = 0; s < static_cast<std::size_t>(n_agents) % n; ++s) ++counts[s];
    return InitialDistribution::point_mass(make(counts));
  }
  if (type == "counts") return InitialDistribution::point_mass(make(get<std::vector<int>>(initial, "counts")));
  InitialDistribution d;
  for (const auto& c : initial.at("support")) d.support.push_back(make(c.get<std::vector<int>>()));
  d.probs = get<std::vector<double>>(initial, "probs");
  if (d.probs.size() != d.support.size() || d.support.empty())
    throw ConfigError("initial mixture needs one probability per support point");
  double total = 0.0;
  for (double p : d.probs) {
    if (!(p >= 0.0)) throw ConfigError("initial mixture probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("initial mixture probabilities must sum to 1");
  return d;
}

Instance build_instance(const Json& config) {
  StateGraph graph = build_graph(config.at("graph"));
  const Json& model_json = config.at("model");
  ModelSpec model = build_model(model_json, graph);
  InitialDistribution initial = build_initial(model_json.at("initial"), graph, model.n_agents);
  return Instance{std::move(graph), std::move(model), std::move(initial)};
}

std::optional<IndividualPolicy> build_individual_policy(const Json& policy,
                                                        const Instance& instance) {
  const auto type = get<std::string>(policy, "type");
  const std::size_t n_actions = instance.model.n_actions();
  if (type == "uniform") return uniform_individual_policy(n_actions);
  if (type == "logistic") {
    if (n_actions != 2) throw ConfigError("the logistic policy needs exactly two actions");
    return occupancy_logistic_policy(get<double>(policy, "bias"), get<double>(policy, "slope"));
  }
  if (type == "table") {
    auto probs = get<std::vector<std::vector<double>>>(policy, "probs");
    if (probs.size() != instance.graph.size())
      throw ConfigError("policy.probs needs one row per state");
    for (const auto& row : probs) {
      if (row.size() != n_actions) throw ConfigError("policy.probs rows need one entry per action");
      double total = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw ConfigError("policy.probs entries must be non-negative");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-10) throw ConfigError("policy.probs rows must sum to 1");
    }
    return table_individual_policy(std::move(probs));
  }
  return std::nullopt;
}

std::unique_ptr<TeamPolicy> build_policy(const Json& policy, const Instance& instance,
                                         std::uint64_t seed, double candidate_cap) {
  const ModelSpec& model = instance.model;
  if (auto pi = build_individual_policy(policy, instance))
    return std::make_unique<LiftedPolicy>(std::move(*pi), instance.graph.size(), model.n_actions(),
                                          model.n_agents);
  const Json& s = policy.at("seed");
  const std::uint64_t net_seed = s.is_null() ? seed : s.get<std::uint64_t>();
  return std::make_unique<EnergyPolicy>(
      init_energy_params(instance.graph.size(), model.n_actions(), get<int>(policy, "width"),
                         get<double>(policy, "radius"), get<double>(policy, "tau"), net_seed),
      model.n_actions(), model.n_agents, candidate_cap);
}

CriticConfig build_critic_config(const Json& critic) {
  CriticConfig c;
  c.width = get<int>(critic, "width");
  c.radius = get<double>(critic, "radius");
  c.iterations = get<int>(critic, "iterations");
  if (!critic.at("step_size").is_null()) c.step_size = get<double>(critic, "step_size");
  c.burn_in = get<int>(critic, "burn_in");
  c.thinning = get<int>(critic, "thinning");
  if (c.width < 1 || c.iterations < 1 || c.burn_in < 0 || c.thinning < 1 || !(c.radius >= 0.0))
    throw ConfigError("invalid training.critic settings");
  return c;
}

ActorConfig build_actor_config(const Json& training) {
  const Json& a = training.at("actor");
  ActorConfig c;
  c.width = get<int>(a, "width");
  c.radius = get<double>(a, "radius");
  c.tau = get<double>(a, "tau");
  c.iterations = get<int>(a, "iterations");
  if (!a.at("step_size").is_null()) c.step_size = get<double>(a, "step_size");
  c.batch = get<int>(a, "batch");
  c.k = get<int>(a, "k");
  c.warmup_restarts = get<double>(a, "warmup_restarts");
  c.mc_rollouts = get<int>(a, "mc_rollouts");
  c.mc_every = get<int>(a, "mc_every");
  c.critic = build_critic_config(training.at("critic"));
  c.critic.k = c.k;
  if (c.width < 1 || c.iterations < 0 || c.batch < 1 || c.k < 0 || !(c.tau > 0.0) ||
      c.mc_rollouts < 1 || c.mc_every < 1)
    throw ConfigError("invalid training.actor settings");
  return c;
}

std::string resolve_output_dir(const Json& config, const std::string& command) {
  const auto dir = config.at("output_dir").get<std::string>();
  if (!dir.empty()) return dir;
  const char* root = std::getenv(kOutputRootEnv);
  const std::filesystem::path base = (root != nullptr && *root != '\0') ? root : "runs";
  return (base / command).string();
}

}  // namespace mfac
