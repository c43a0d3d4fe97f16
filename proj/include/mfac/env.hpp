#pragma once

#include <compare>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfac/graph.hpp"
#include "mfac/random.hpp"

namespace mfac {

/// Occupancy counts of N agents over the states. mu(s) = counts[s] / N.
class EmpiricalStateDist {
 public:
  EmpiricalStateDist() = default;
  /// Throws std::invalid_argument on negative counts or zero total.
  explicit EmpiricalStateDist(std::vector<int> counts);

  std::size_t size() const { return counts_.size(); }
  int n_agents() const { return n_agents_; }
  int count(StateIndex s) const { return counts_.at(s); }
  double fraction(StateIndex s) const {
    return static_cast<double>(counts_.at(s)) / n_agents_;
  }
  const std::vector<int>& counts() const { return counts_; }

  friend bool operator==(const EmpiricalStateDist&, const EmpiricalStateDist&) = default;
  friend auto operator<=>(const EmpiricalStateDist&, const EmpiricalStateDist&) = default;

 private:
  std::vector<int> counts_;
  int n_agents_ = 0;
};

/// Per-state action counts; row s holds how many of the agents at s chose
/// each action. Empty states carry an all-zero row.
class TeamActionDist {
 public:
  TeamActionDist() = default;
  TeamActionDist(std::size_t n_states, std::size_t n_actions);
  /// Row-major counts, n_actions per state.
  TeamActionDist(std::size_t n_actions, std::vector<int> flat_counts);

  std::size_t n_states() const { return n_actions_ == 0 ? 0 : counts_.size() / n_actions_; }
  std::size_t n_actions() const { return n_actions_; }

  int count(StateIndex s, std::size_t a) const { return counts_.at(s * n_actions_ + a); }
  void set(StateIndex s, std::size_t a, int value) { counts_.at(s * n_actions_ + a) = value; }
  void add(StateIndex s, std::size_t a, int delta) { counts_.at(s * n_actions_ + a) += delta; }

  std::span<const int> row(StateIndex s) const {
    return std::span<const int>(counts_).subspan(s * n_actions_, n_actions_);
  }
  std::vector<int> row_vector(StateIndex s) const;
  void set_row(StateIndex s, std::span<const int> counts);

  /// Number of agents at s (row sum).
  int occupancy(StateIndex s) const;
  /// h(s): row divided by its sum; all zeros for an empty state.
  std::vector<double> proportions(StateIndex s) const;

  const std::vector<int>& flat() const { return counts_; }
  bool compatible_with(const EmpiricalStateDist& mu) const;

  friend bool operator==(const TeamActionDist&, const TeamActionDist&) = default;

 private:
  std::size_t n_actions_ = 0;
  std::vector<int> counts_;
};

/// Agent-level state (and optionally action) of every agent.
struct AgentProfile {
  std::vector<StateIndex> states;
  std::vector<std::size_t> actions;  // empty until actions are drawn
};

/// The mean-field restricted to N_s, as seen by reward and kernel functions.
struct LocalMeanField {
  StateIndex center = 0;
  std::span<const StateIndex> members;  // N_s, canonical order
  std::vector<int> counts;              // occupancy at each member
  int n_agents = 0;

  /// mu(t) for t in N_s; throws std::out_of_range for non-members.
  double fraction_of(StateIndex t) const;
  double self_fraction() const { return fraction_of(center); }
};

LocalMeanField local_mean_field(const StateGraph& graph, const EmpiricalStateDist& mu,
                                StateIndex s);

/// r(s, mu(N_s), a).
using RewardFn = std::function<double(const LocalMeanField&, std::size_t action)>;
/// P(. | s, mu(N_s), a) as a pmf indexed by global state.
using KernelFn = std::function<std::vector<double>(const LocalMeanField&, std::size_t action)>;

struct ModelSpec {
  std::vector<std::string> actions;
  RewardFn reward;
  KernelFn kernel;
  double r_max = 1.0;
  double gamma = 0.5;
  int n_agents = 1;
  /// Canonical JSON text naming the built-ins and their parameters; used for
  /// manifests and model hashes.
  std::string description;

  std::size_t n_actions() const { return actions.size(); }
};

/// Distribution P0 over initial empirical distributions.
struct InitialDistribution {
  std::vector<EmpiricalStateDist> support;
  std::vector<double> probs;

  static InitialDistribution point_mass(EmpiricalStateDist mu);
  EmpiricalStateDist sample(Rng& rng) const;
};

// Built-in model components.

/// offset - slope * mu(s).
RewardFn congestion_reward(double offset, double slope);
/// value if the action matches, else 0.
RewardFn action_indicator_reward(std::size_t action, double value);
RewardFn constant_reward(double value);

/// stay_action keeps the agent in place; every other action moves it to a
/// uniformly chosen adjacent state (stays if there is none).
KernelFn stay_spread_kernel(std::size_t n_states, std::size_t stay_action);
/// Non-stay actions move to adjacent t with probability
/// move_prob * (1 - mu(t)) / deg(s); the remaining mass stays.
KernelFn crowd_averse_kernel(std::size_t n_states, std::size_t stay_action, double move_prob);
/// Uniform over every state. Only valid on complete graphs; used to exercise
/// model validation.
KernelFn uniform_global_kernel(std::size_t n_states);

/// A model on its graph, with the initial distribution.
struct Instance {
  StateGraph graph;
  ModelSpec model;
  InitialDistribution initial;
};

/// Line graph over {0,1,2}, actions {stay, move}, stay/spread kernel,
/// reward 1 - mu(s), r_max = 1, gamma = 0.5, N = 4, P0 = point mass at (2,1,1).
Instance canonical_line3();

// Validation.

/// Throws ModelError unless pmf is non-negative, sums to 1 within 1e-12 and
/// is supported inside N_s.
void validate_kernel_pmf(std::span<const double> pmf, const LocalMeanField& local,
                         std::size_t n_states);
/// Checks the scalar settings and every (s, mu, a) triple of the
/// reward/kernel when the state-distribution space has at most
/// `enumeration_cap` elements. Throws ModelError.
void validate_model(const ModelSpec& model, const StateGraph& graph,
                    double enumeration_cap = 200000);

// Operations.

EmpiricalStateDist empirical_of(const AgentProfile& profile, std::size_t n_states);
TeamActionDist team_dist_of(const AgentProfile& profile, std::size_t n_states,
                            std::size_t n_actions);

/// Agents sorted by (state, action) realizing (mu, h).
AgentProfile canonical_profile(const EmpiricalStateDist& mu, const TeamActionDist& h);

struct AgentStepResult {
  AgentProfile next;             // same agent order, no actions
  std::vector<double> rewards;   // per agent
};

/// One synchronous step: agent i earns r(s_i, mu(N_{s_i}), a_i) and moves
/// independently per the kernel. Agents are processed in profile order, one
/// uniform draw each.
AgentStepResult agent_step(const ModelSpec& model, const StateGraph& graph,
                           const AgentProfile& profile, Rng& rng);

/// One draw of mu' ~ P^N(. | mu, h), realized through agent_step on the
/// canonical profile of (mu, h).
EmpiricalStateDist team_sample_step(const ModelSpec& model, const StateGraph& graph,
                                    const EmpiricalStateDist& mu, const TeamActionDist& h,
                                    Rng& rng);

/// r_s = sum_a r(s, mu(N_s), a) h(s)(a); 0 for an all-zero h(s).
double local_team_reward(const ModelSpec& model, const LocalMeanField& local,
                         std::span<const double> h_s);

/// Occupancy-weighted team reward mu(s) * r_s. This is the per-team stage
/// reward that the team Q-functions accumulate, so that summing over teams
/// reproduces the agent-average reward.
double team_stage_reward(const ModelSpec& model, const StateGraph& graph, StateIndex s,
                         const EmpiricalStateDist& mu, const TeamActionDist& h);

/// sum_s mu(s) sum_a r(s, mu(N_s), a) h(s)(a).
double global_stage_reward(const ModelSpec& model, const StateGraph& graph,
                           const EmpiricalStateDist& mu, const TeamActionDist& h);

}  // namespace mfac
