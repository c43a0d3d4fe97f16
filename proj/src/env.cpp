#include "mfac/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mfac/combinatorics.hpp"
#include "mfac/errors.hpp"

namespace mfac {

EmpiricalStateDist::EmpiricalStateDist(std::vector<int> counts) : counts_(std::move(counts)) {
  for (int c : counts_)
    if (c < 0) throw std::invalid_argument("state counts must be non-negative");
  n_agents_ = std::accumulate(counts_.begin(), counts_.end(), 0);
  if (n_agents_ <= 0) throw std::invalid_argument("empirical distribution needs N >= 1 agents");
}

TeamActionDist::TeamActionDist(std::size_t n_states, std::size_t n_actions)
    : n_actions_(n_actions), counts_(n_states * n_actions, 0) {}

TeamActionDist::TeamActionDist(std::size_t n_actions, std::vector<int> flat_counts)
    : n_actions_(n_actions), counts_(std::move(flat_counts)) {
  if (n_actions_ == 0 || counts_.size() % n_actions_ != 0)
    throw std::invalid_argument("flat action counts are not a multiple of |A|");
  for (int c : counts_)
    if (c < 0) throw std::invalid_argument("action counts must be non-negative");
}

std::vector<int> TeamActionDist::row_vector(StateIndex s) const {
  auto r = row(s);
  return {r.begin(), r.end()};
}

void TeamActionDist::set_row(StateIndex s, std::span<const int> counts) {
  if (counts.size() != n_actions_) throw std::invalid_argument("row length differs from |A|");
  std::copy(counts.begin(), counts.end(), counts_.begin() + static_cast<long>(s * n_actions_));
}

int TeamActionDist::occupancy(StateIndex s) const {
  auto r = row(s);
  return std::accumulate(r.begin(), r.end(), 0);
}

std::vector<double> TeamActionDist::proportions(StateIndex s) const {
  std::vector<double> out(n_actions_, 0.0);
  const int total = occupancy(s);
  if (total == 0) return out;
  for (std::size_t a = 0; a < n_actions_; ++a)
    out[a] = static_cast<double>(count(s, a)) / total;
  return out;
}

bool TeamActionDist::compatible_with(const EmpiricalStateDist& mu) const {
  if (n_states() != mu.size()) return false;
  for (StateIndex s = 0; s < mu.size(); ++s)
    if (occupancy(s) != mu.count(s)) return false;
  return true;
}

double LocalMeanField::fraction_of(StateIndex t) const {
  auto it = std::lower_bound(members.begin(), members.end(), t);
  if (it == members.end() || *it != t)
    throw std::out_of_range("state is outside the local neighborhood");
  return static_cast<double>(counts[static_cast<std::size_t>(it - members.begin())]) / n_agents;
}

LocalMeanField local_mean_field(const StateGraph& graph, const EmpiricalStateDist& mu,
                                StateIndex s) {
  LocalMeanField local;
  local.center = s;
  local.members = graph.hop_members(s, 1);
  local.counts.reserve(local.members.size());
  for (StateIndex t : local.members) local.counts.push_back(mu.count(t));
  local.n_agents = mu.n_agents();
  return local;
}

InitialDistribution InitialDistribution::point_mass(EmpiricalStateDist mu) {
  return InitialDistribution{{std::move(mu)}, {1.0}};
}

EmpiricalStateDist InitialDistribution::sample(Rng& rng) const {
  if (support.size() == 1) return support.front();
  return support[sample_categorical(probs, rng)];
}

RewardFn congestion_reward(double offset, double slope) {
  return [offset, slope](const LocalMeanField& local, std::size_t) {
    return offset - slope * local.self_fraction();
  };
}

RewardFn action_indicator_reward(std::size_t action, double value) {
  return [action, value](const LocalMeanField&, std::size_t a) {
    return a == action ? value : 0.0;
  };
}

RewardFn constant_reward(double value) {
  return [value](const LocalMeanField&, std::size_t) { return value; };
}

KernelFn stay_spread_kernel(std::size_t n_states, std::size_t stay_action) {
  return [n_states, stay_action](const LocalMeanField& local, std::size_t a) {
    std::vector<double> pmf(n_states, 0.0);
    const std::size_t degree = local.members.size() - 1;
    if (a == stay_action || degree == 0) {
      pmf[local.center] = 1.0;
      return pmf;
    }
    for (StateIndex t : local.members)
      if (t != local.center) pmf[t] = 1.0 / static_cast<double>(degree);
    return pmf;
  };
}

KernelFn crowd_averse_kernel(std::size_t n_states, std::size_t stay_action, double move_prob) {
  return [n_states, stay_action, move_prob](const LocalMeanField& local, std::size_t a) {
    std::vector<double> pmf(n_states, 0.0);
    const std::size_t degree = local.members.size() - 1;
    if (a == stay_action || degree == 0) {
      pmf[local.center] = 1.0;
      return pmf;
    }
    double moved = 0.0;
    for (std::size_t i = 0; i < local.members.size(); ++i) {
      const StateIndex t = local.members[i];
      if (t == local.center) continue;
      const double p = move_prob * (1.0 - local.fraction_of(t)) / static_cast<double>(degree);
      pmf[t] = p;
      moved += p;
    }
    pmf[local.center] = 1.0 - moved;
    return pmf;
  };
}

KernelFn uniform_global_kernel(std::size_t n_states) {
  return [n_states](const LocalMeanField&, std::size_t) {
    return std::vector<double>(n_states, 1.0 / static_cast<double>(n_states));
  };
}

Instance canonical_line3() {
  StateGraph graph = line_graph(3);
  ModelSpec model;
  model.actions = {"stay", "move"};
  model.reward = congestion_reward(1.0, 1.0);
  model.kernel = stay_spread_kernel(3, 0);
  model.r_max = 1.0;
  model.gamma = 0.5;
  model.n_agents = 4;
  model.description =
      R"({"kernel":{"name":"stay_spread","stay_action":0},"reward":{"name":"congestion","offset":1.0,"slope":1.0}})";
  return Instance{std::move(graph), std::move(model),
                  InitialDistribution::point_mass(EmpiricalStateDist({2, 1, 1}))};
}

void validate_kernel_pmf(std::span<const double> pmf, const LocalMeanField& local,
                         std::size_t n_states) {
  if (pmf.size() != n_states) throw ModelError("kernel pmf has the wrong length");
  double total = 0.0;
  for (StateIndex t = 0; t < n_states; ++t) {
    if (!(pmf[t] >= 0.0)) throw ModelError("kernel pmf has a negative or NaN entry");
    if (pmf[t] > 0.0 &&
        !std::binary_search(local.members.begin(), local.members.end(), t)) {
      std::ostringstream msg;
      msg << "kernel puts mass " << pmf[t] << " on state index " << t
          << " outside the 1-hop neighborhood of state index " << local.center;
      throw ModelError(msg.str());
    }
    total += pmf[t];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ModelError("kernel pmf does not sum to 1");
}

void validate_model(const ModelSpec& model, const StateGraph& graph, double enumeration_cap) {
  if (!(model.gamma > 0.0 && model.gamma < 1.0)) throw ModelError("gamma must lie in (0, 1)");
  if (model.n_agents < 1) throw ModelError("N must be at least 1");
  if (model.actions.empty()) throw ModelError("action list is empty");
  if (!(model.r_max > 0.0)) throw ModelError("r_max must be positive");
  if (!model.reward || !model.kernel) throw ModelError("model is missing a reward or kernel");
  if (composition_count(model.n_agents, graph.size()) > enumeration_cap) return;

  for (const auto& counts : compositions(model.n_agents, graph.size())) {
    EmpiricalStateDist mu(counts);
    for (StateIndex s = 0; s < graph.size(); ++s) {
      LocalMeanField local = local_mean_field(graph, mu, s);
      for (std::size_t a = 0; a < model.n_actions(); ++a) {
        const double r = model.reward(local, a);
        if (!(std::abs(r) <= model.r_max))
          throw ModelError("reward " + std::to_string(r) + " exceeds r_max");
        validate_kernel_pmf(model.kernel(local, a), local, graph.size());
      }
    }
  }
}

EmpiricalStateDist empirical_of(const AgentProfile& profile, std::size_t n_states) {
  std::vector<int> counts(n_states, 0);
  for (StateIndex s : profile.states) counts.at(s) += 1;
  return EmpiricalStateDist(std::move(counts));
}

TeamActionDist team_dist_of(const AgentProfile& profile, std::size_t n_states,
                            std::size_t n_actions) {
  if (profile.actions.size() != profile.states.size())
    throw std::invalid_argument("profile has no actions for every agent");
  TeamActionDist h(n_states, n_actions);
  for (std::size_t i = 0; i < profile.states.size(); ++i) h.add(profile.states[i], profile.actions[i], 1);
  return h;
}

AgentProfile canonical_profile(const EmpiricalStateDist& mu, const TeamActionDist& h) {
  if (!h.compatible_with(mu)) throw std::invalid_argument("team action counts do not match mu");
  AgentProfile profile;
  for (StateIndex s = 0; s < mu.size(); ++s)
    for (std::size_t a = 0; a < h.n_actions(); ++a)
      for (int i = 0; i < h.count(s, a); ++i) {
        profile.states.push_back(s);
        profile.actions.push_back(a);
      }
  return profile;
}

AgentStepResult agent_step(const ModelSpec& model, const StateGraph& graph,
                           const AgentProfile& profile, Rng& rng) {
  if (profile.actions.size() != profile.states.size())
    throw std::invalid_argument("agent_step needs an action for every agent");
  const EmpiricalStateDist mu = empirical_of(profile, graph.size());

  // mu is fixed within the step, so reward and kernel are per (s, a).
  struct Cell {
    double reward;
    std::vector<double> pmf;
  };
  std::map<std::pair<StateIndex, std::size_t>, Cell> cells;
  std::map<StateIndex, LocalMeanField> locals;

  AgentStepResult result;
  result.next.states.resize(profile.states.size());
  result.rewards.resize(profile.states.size());
  for (std::size_t i = 0; i < profile.states.size(); ++i) {
    const StateIndex s = profile.states[i];
    const std::size_t a = profile.actions[i];
    if (a >= model.n_actions()) throw std::invalid_argument("action index out of range");
    auto key = std::make_pair(s, a);
    auto it = cells.find(key);
    if (it == cells.end()) {
      auto lit = locals.find(s);
      if (lit == locals.end()) lit = locals.emplace(s, local_mean_field(graph, mu, s)).first;
      Cell cell{model.reward(lit->second, a), model.kernel(lit->second, a)};
      validate_kernel_pmf(cell.pmf, lit->second, graph.size());
      it = cells.emplace(key, std::move(cell)).first;
    }
    result.rewards[i] = it->second.reward;
    result.next.states[i] = sample_categorical(it->second.pmf, rng);
  }
  return result;
}

EmpiricalStateDist team_sample_step(const ModelSpec& model, const StateGraph& graph,
                                    const EmpiricalStateDist& mu, const TeamActionDist& h,
                                    Rng& rng) {
  if (!h.compatible_with(mu)) throw std::invalid_argument("team action counts do not match mu");
  return empirical_of(agent_step(model, graph, canonical_profile(mu, h), rng).next, graph.size());
}

double local_team_reward(const ModelSpec& model, const LocalMeanField& local,
                         std::span<const double> h_s) {
  double total = 0.0;
  for (std::size_t a = 0; a < h_s.size(); ++a) {
    if (h_s[a] < 0.0) throw std::invalid_argument("team action proportion is negative");
    if (h_s[a] > 0.0) total += model.reward(local, a) * h_s[a];
  }
  return total;
}

double team_stage_reward(const ModelSpec& model, const StateGraph& graph, StateIndex s,
                         const EmpiricalStateDist& mu, const TeamActionDist& h) {
  if (mu.count(s) == 0) return 0.0;
  const LocalMeanField local = local_mean_field(graph, mu, s);
  return mu.fraction(s) * local_team_reward(model, local, h.proportions(s));
}

double global_stage_reward(const ModelSpec& model, const StateGraph& graph,
                           const EmpiricalStateDist& mu, const TeamActionDist& h) {
  if (!h.compatible_with(mu)) throw std::invalid_argument("team action counts do not match mu");
  double total = 0.0;
  for (StateIndex s = 0; s < graph.size(); ++s) total += team_stage_reward(model, graph, s, mu, h);
  return total;
}

}  // namespace mfac
