#pragma once

#include <map>
#include <utility>
#include <vector>

#include "mfac/combinatorics.hpp"
#include "mfac/env.hpp"
#include "mfac/graph.hpp"
#include "mfac/neural.hpp"
#include "mfac/policy.hpp"

namespace mfac {

inline constexpr double kDefaultXiCap = 200000;

/// Enumeration of every (mu, h) pair at population N. State distributions
/// come in colex order; within a state distribution, h is mixed-radix over
/// the per-state candidate sets with state 0 varying fastest.
class XiSpace {
 public:
  /// Throws CapExceeded when C(N+|S|-1, |S|-1) * max_mu |H^N(mu)| > cap.
  XiSpace(std::size_t n_states, std::size_t n_actions, int n_agents, double cap = kDefaultXiCap);

  /// The quantity checked against the cap.
  static double size_bound(std::size_t n_states, std::size_t n_actions, int n_agents);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  int n_agents() const { return n_agents_; }

  std::size_t n_mus() const { return mus_.size(); }
  std::size_t size() const { return hs_.size(); }

  const EmpiricalStateDist& mu(std::size_t m) const { return mus_.at(m); }
  std::size_t mu_index(const EmpiricalStateDist& mu) const;
  std::size_t offset(std::size_t m) const { return offsets_.at(m); }
  std::size_t h_count(std::size_t m) const { return offsets_.at(m + 1) - offsets_.at(m); }

  std::size_t mu_of(std::size_t xi) const { return mu_of_.at(xi); }
  const TeamActionDist& h(std::size_t xi) const { return hs_.at(xi); }
  std::size_t index(const EmpiricalStateDist& mu, const TeamActionDist& h) const;

  const CandidateSet& candidates(int count) const { return candidates_.at(static_cast<std::size_t>(count)); }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  int n_agents_;
  std::vector<CandidateSet> candidates_;
  std::vector<EmpiricalStateDist> mus_;
  std::map<std::vector<int>, std::size_t> mu_lookup_;
  std::vector<std::size_t> offsets_;  // n_mus + 1 entries
  std::vector<std::size_t> mu_of_;
  std::vector<TeamActionDist> hs_;
};

enum class TruncationWeights { uniform, nu_conditional };

struct TruncatedQ {
  /// Window key (see LocalObservation::key) to Q-hat value.
  std::map<std::vector<int>, double> by_window;
  /// Q-hat evaluated at the window of every xi.
  std::vector<double> per_xi;
};

/// Dense ground truth over Xi for an enumerable instance. Transition rows and
/// reward tables are built once; every method is const and deterministic.
///
/// Tables passed around are indexed by xi id. A "policy weight" vector holds
/// Pi(h | mu) for every xi and is what ties a team policy to the tables.
class ExactOracle {
 public:
  ExactOracle(ModelSpec model, StateGraph graph, double xi_cap = kDefaultXiCap);

  const XiSpace& xi() const { return xi_; }
  const ModelSpec& model() const { return model_; }
  const StateGraph& graph() const { return graph_; }
  std::size_t transition_nonzeros() const;

  /// Law of mu' as a dense pmf over the state distributions.
  std::vector<double> exact_team_kernel(const EmpiricalStateDist& mu,
                                        const TeamActionDist& h) const;
  const std::vector<std::pair<std::size_t, double>>& transition_row(std::size_t xi) const {
    return rows_.at(xi);
  }

  /// mu(s) * r_s for every xi.
  const std::vector<double>& team_reward(StateIndex s) const { return team_reward_.at(s); }
  /// sum_s mu(s) * r_s for every xi.
  const std::vector<double>& global_reward() const { return global_reward_; }

  std::vector<double> policy_weights(const PolicyTable& table) const;
  /// P0(mu) * Pi(h | mu).
  std::vector<double> initial_weights(const std::vector<double>& pi_w,
                                      const InitialDistribution& initial) const;

  /// r + gamma * sum_mu' P(mu' | xi) sum_h' Pi(h' | mu') q(mu', h').
  std::vector<double> bellman_apply(const std::vector<double>& pi_w, const std::vector<double>& q,
                                    const std::vector<double>& reward) const;
  std::vector<double> bellman_apply(const std::vector<double>& pi_w, const std::vector<double>& q,
                                    StateIndex s) const;

  /// Fixed point of bellman_apply for an arbitrary reward table, stopped when
  /// successive iterates differ by at most tol * (1 - gamma) / gamma, so the
  /// result is within tol of the true fixed point in sup norm.
  std::vector<double> evaluate_q(const std::vector<double>& pi_w,
                                 const std::vector<double>& reward, double tol = 1e-8) const;
  std::vector<double> exact_team_q(const std::vector<double>& pi_w, StateIndex s,
                                   double tol = 1e-8) const;
  /// Value iteration on the state distributions alone, for the global reward.
  std::vector<double> exact_team_value(const std::vector<double>& pi_w, double tol = 1e-8) const;
  /// Q(xi) = r(xi) + gamma * E[max_h' Q(mu', h')] with the global reward.
  std::vector<double> exact_optimal_q(double tol = 1e-8) const;

  /// Invariant law of the (mu, h) chain by power iteration of the lazy chain
  /// (I + K) / 2 started from P0 x Pi. Throws NonConvergence after max_iter.
  std::vector<double> exact_stationary(const std::vector<double>& pi_w,
                                       const InitialDistribution& initial, double tol = 1e-10,
                                       std::size_t max_iter = 1000000) const;
  /// (1 - gamma) sum_t gamma^t rho_0 K^t, truncated once 2 gamma^T <= tol with
  /// the tail mass gamma^T rho_T kept, so the result sums to 1.
  std::vector<double> exact_visitation(const std::vector<double>& pi_w,
                                       const InitialDistribution& initial, double gamma,
                                       double tol = 1e-10) const;

  double exact_j(const std::vector<double>& pi_w, const InitialDistribution& initial,
                 double tol = 1e-8) const;
  /// E_{mu0 ~ P0}[max_h Q*(mu0, h)], the centralized upper bound on J.
  double optimal_j(const InitialDistribution& initial, double tol = 1e-8) const;

  /// Window key of every xi at (s, k).
  std::vector<std::vector<int>> window_keys(StateIndex s, int k) const;

  /// Largest spread of q over pairs that agree on N^k_s.
  double decay_gap(const std::vector<double>& q_s, StateIndex s, int k) const;

  /// Q-hat_s averaged over consistent completions. nu is required for
  /// nu-conditional weights; windows with no nu mass fall back to uniform.
  TruncatedQ truncated_q(const std::vector<double>& q_s, StateIndex s, int k,
                         TruncationWeights weights,
                         const std::vector<double>* nu = nullptr) const;

 private:
  std::vector<double> successor_values(const std::vector<double>& pi_w,
                                       const std::vector<double>& q) const;

  ModelSpec model_;
  StateGraph graph_;
  XiSpace xi_;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows_;
  std::vector<std::vector<double>> team_reward_;
  std::vector<double> global_reward_;
};

/// Exact J of an energy policy.
double exact_j(const ExactOracle& oracle, const EnergyPolicyParams& params,
               const InitialDistribution& initial, double tol = 1e-8);

/// Centered feature Phi(theta, s, mu, h) at every xi.
std::vector<Matrix> centered_features(const ExactOracle& oracle, const EnergyPolicyParams& params,
                                      StateIndex s);

/// grad_{theta_s} J = tau / (1 - gamma) * sum_xi sigma(xi) Q(xi) Phi_s(xi) for
/// every s, with sigma and the aggregate Q computed exactly.
std::vector<Matrix> exact_policy_grad(const ExactOracle& oracle, const EnergyPolicyParams& params,
                                      const InitialDistribution& initial, double tol = 1e-12);

/// Localized gradient g_s: the aggregate Q is replaced by
/// sum_{y in N^k_s} Q-hat_y at radius k.
Matrix localized_policy_grad(const ExactOracle& oracle, const EnergyPolicyParams& params,
                             const InitialDistribution& initial, StateIndex s, int k,
                             TruncationWeights weights = TruncationWeights::uniform,
                             double tol = 1e-12);

}  // namespace mfac
