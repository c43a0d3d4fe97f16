#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mfac/env.hpp"
#include "mfac/graph.hpp"
#include "mfac/neural.hpp"
#include "mfac/observation.hpp"
#include "mfac/policy.hpp"
#include "mfac/random.hpp"

namespace mfac {

class ExactOracle;

/// One transition of the joint chain. rewards[s] is the team stage reward
/// mu(s) * r_s of the first pair; h_next is drawn from Pi(. | mu_next).
struct TransitionTuple {
  EmpiricalStateDist mu;
  TeamActionDist h;
  std::vector<double> rewards;
  EmpiricalStateDist mu_next;
  TeamActionDist h_next;
};

/// Per-state team rewards mu(s) * r_s of a pair.
std::vector<double> team_rewards(const ModelSpec& model, const StateGraph& graph,
                                 const EmpiricalStateDist& mu, const TeamActionDist& h);

/// Consecutive transitions of the (mu, h) chain after a burn-in from P0,
/// optionally thinned. Approximates draws from the stationary law.
class StationaryStream {
 public:
  StationaryStream(const ModelSpec& model, const StateGraph& graph, const PolicyTable& policy,
                   const InitialDistribution& initial, int burn_in, std::uint64_t seed,
                   int thinning = 1);

  TransitionTuple next();

 private:
  void advance();

  const ModelSpec& model_;
  const StateGraph& graph_;
  const PolicyTable& policy_;
  int thinning_;
  Rng rng_;
  EmpiricalStateDist mu_;
  TeamActionDist h_;
};

/// Rolls a fresh chain burn_in steps from P0 and returns the next transition.
TransitionTuple sample_stationary_tuple(const ModelSpec& model, const StateGraph& graph,
                                        const PolicyTable& policy,
                                        const InitialDistribution& initial, int burn_in, Rng& rng);

/// Geometric-restart chain: with probability gamma the dynamics step, otherwise
/// a restart from P0 x Pi. Its invariant law is the discounted visitation
/// measure. Emission starts after ceil(warmup_restarts / (1 - gamma)) steps.
class VisitationStream {
 public:
  VisitationStream(const ModelSpec& model, const StateGraph& graph, const PolicyTable& policy,
                   const InitialDistribution& initial, double gamma, std::uint64_t seed,
                   double warmup_restarts = 10.0);

  std::pair<EmpiricalStateDist, TeamActionDist> next();

 private:
  void advance();

  const ModelSpec& model_;
  const StateGraph& graph_;
  const PolicyTable& policy_;
  const InitialDistribution& initial_;
  double gamma_;
  Rng rng_;
  EmpiricalStateDist mu_;
  TeamActionDist h_;
};

std::pair<EmpiricalStateDist, TeamActionDist> sample_visitation_pair(
    const ModelSpec& model, const StateGraph& graph, const PolicyTable& policy,
    const InitialDistribution& initial, double gamma, Rng& rng, double warmup_restarts = 10.0);

struct CriticConfig {
  int width = 512;
  double radius = 10.0;
  int iterations = 20000;           // T_critic
  std::optional<double> step_size;  // default min((1 - gamma) / 8, T^{-1/2})
  int k = 1;
  int burn_in = 200;
  int thinning = 1;

  double resolved_step_size(double gamma) const;
};

/// omega_s and its running average for every state.
struct CriticState {
  int k = 1;
  double step_size = 0.0;
  std::vector<TwoLayerNet> nets;       // current omega_s
  std::vector<Matrix> weight_sums;     // sum of omega_s(t+1) over the steps so far
  std::vector<double> sq_residual_sum; // sum of delta_s^2
  std::vector<long long> steps;        // updates applied to each state

  /// omega-bar_s = weight_sums[s] / steps (omega_s(0) before any step).
  TwoLayerNet averaged(StateIndex s) const;
  double mean_sq_residual(StateIndex s) const;
  /// Q_s(window; omega-bar_s).
  double evaluate(StateIndex s, const LocalObservation& obs) const;
};

/// Fresh critic: width-M net per state over its k-hop window, seeded from
/// derive_seed(seed, s).
CriticState init_critic(const ModelSpec& model, const StateGraph& graph, const CriticConfig& cfg,
                        std::uint64_t seed);

/// delta = Q_s(zeta) - r_s - gamma Q_s(zeta') with the current omega_s.
double td_residual(const TwoLayerNet& net, const LocalObservation& obs, double reward,
                   const LocalObservation& next_obs, double gamma);

/// One projected semigradient step for state s; reads only the k-hop windows
/// of the tuple. Returns delta.
double critic_step(CriticState& critic, const StateGraph& graph, const TransitionTuple& tuple,
                   StateIndex s, double gamma);

/// Localized neural TD: T_critic - 1 shared tuples, every state updated from
/// each one.
CriticState critic_train(const ModelSpec& model, const StateGraph& graph,
                         const PolicyTable& policy, const InitialDistribution& initial,
                         const CriticConfig& cfg, std::uint64_t seed);

/// Any per-state local Q estimate: (y, window of y) to value.
using LocalCritic = std::function<double(StateIndex, const LocalObservation&)>;

LocalCritic critic_function(const CriticState& critic);

/// tau / (1 - gamma) * sum_l w_l [sum_{y in N^k_s} Q_y(window_y)] Phi(theta, s, mu_l, h_l).
Matrix ghat_weighted(const std::vector<std::pair<EmpiricalStateDist, TeamActionDist>>& batch,
                     const std::vector<double>& weights, const LocalCritic& critic,
                     const EnergyPolicyParams& params, const StateGraph& graph, StateIndex s,
                     int k, double gamma, double cap = kDefaultCandidateCap);

/// ghat_weighted with w_l = 1 / B.
Matrix ghat_estimate(const std::vector<std::pair<EmpiricalStateDist, TeamActionDist>>& batch,
                     const LocalCritic& critic, const EnergyPolicyParams& params,
                     const StateGraph& graph, StateIndex s, int k, double gamma,
                     double cap = kDefaultCandidateCap);

struct ActorConfig {
  int width = 16;
  double radius = 10.0;
  double tau = 2.0;
  int iterations = 50;              // T_actor
  std::optional<double> step_size;  // default T_actor^{-1/2}
  int batch = 256;                  // B
  int k = 1;
  CriticConfig critic;
  double warmup_restarts = 10.0;
  int mc_rollouts = 100;
  int mc_every = 10;
  double candidate_cap = kDefaultCandidateCap;

  double resolved_step_size() const;
};

struct ActorIterate {
  int iteration = 0;
  std::vector<double> critic_loss;  // mean delta^2 per state
  std::optional<double> j;          // J(theta(t)) when evaluated
  double wall_seconds = 0.0;
};

struct ActorResult {
  EnergyPolicyParams initial;
  EnergyPolicyParams final_params;
  EnergyPolicyParams best;
  std::vector<ActorIterate> log;  // t = 0..T_actor; the last entry has no critic
  std::optional<double> best_j;
  std::optional<int> best_iteration;
};

/// Monte Carlo estimate of J from team-level rollouts, truncated where
/// gamma^H < 1e-8.
double monte_carlo_j(const ModelSpec& model, const StateGraph& graph, const PolicyTable& policy,
                     const InitialDistribution& initial, int rollouts, Rng& rng);

/// Localized actor-critic ascent. J is exact at every iterate when `oracle` is
/// given, else a Monte Carlo estimate every mc_every iterations.
ActorResult actor_train(const ModelSpec& model, const StateGraph& graph,
                        const InitialDistribution& initial, const ActorConfig& cfg,
                        std::uint64_t seed, const ExactOracle* oracle = nullptr,
                        const std::function<void(const ActorIterate&)>& on_iterate = {});

}  // namespace mfac
