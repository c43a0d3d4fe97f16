#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mfac/combinatorics.hpp"
#include "mfac/env.hpp"
#include "mfac/neural.hpp"
#include "mfac/random.hpp"

namespace mfac {

/// Default cap on |P^{N mu(s)}(A)| for exact per-state softmax enumeration.
inline constexpr double kDefaultCandidateCap = 20000;

/// pi(s, mu(s)): action pmf for an agent at s when `count` of the N agents
/// share that state.
using IndividualPolicy =
    std::function<std::vector<double>(StateIndex s, int count, int n_agents)>;

IndividualPolicy uniform_individual_policy(std::size_t n_actions);
/// One fixed pmf per state, ignoring occupancy.
IndividualPolicy table_individual_policy(std::vector<std::vector<double>> per_state);
/// Two actions; P(action 1) = sigmoid(bias + slope * mu(s)).
IndividualPolicy occupancy_logistic_policy(double bias, double slope);

/// Multinomial lift Pi_s(. | mu(s)) with parameters (count, pi(s, mu(s))),
/// listed in CandidateSet::build(count, |A|) order. count = 0 gives the
/// point mass on the empty count vector. Throws std::invalid_argument when
/// pi is not a pmf.
std::vector<double> lift_policy(const IndividualPolicy& pi, StateIndex s, int count,
                                int n_agents, std::size_t n_actions);

struct RecoveredPolicy {
  std::vector<double> probs;
  /// Set when the Dirac-query roots drifted from 1 by more than 1e-12 and
  /// were renormalized.
  bool renormalized = false;
};

/// pi(a) = Pi_s(delta_a * count)^(1/count). Throws std::invalid_argument for
/// count < 1 and NotALift when the roots do not sum to 1 within 1e-6.
RecoveredPolicy recover_individual(std::span<const double> team_pmf, int count,
                                   std::size_t n_actions);

/// Every agent draws its own action; states in canonical order, agents
/// within a state in sequence. Equivalent to one multinomial draw per state.
TeamActionDist sample_team_action(const IndividualPolicy& pi, const EmpiricalStateDist& mu,
                                  std::size_t n_actions, Rng& rng);

/// A product-form team policy Pi(h | mu) = prod_s Pi_s(h(s) | mu(s)).
class TeamPolicy {
 public:
  virtual ~TeamPolicy() = default;
  virtual std::size_t n_states() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual int n_agents() const = 0;
  /// Pi_s(. | count / N) in CandidateSet::build(count, |A|) order.
  virtual std::vector<double> state_pmf(StateIndex s, int count) const = 0;
};

class LiftedPolicy final : public TeamPolicy {
 public:
  LiftedPolicy(IndividualPolicy pi, std::size_t n_states, std::size_t n_actions, int n_agents);

  std::size_t n_states() const override { return n_states_; }
  std::size_t n_actions() const override { return n_actions_; }
  int n_agents() const override { return n_agents_; }
  std::vector<double> state_pmf(StateIndex s, int count) const override;
  const IndividualPolicy& individual() const { return pi_; }

 private:
  IndividualPolicy pi_;
  std::size_t n_states_;
  std::size_t n_actions_;
  int n_agents_;
};

/// theta_s per state plus the shared temperature tau.
struct EnergyPolicyParams {
  std::vector<TwoLayerNet> nets;
  double tau = 1.0;
};

/// Fresh actor parameters: one width-M net per state with input dimension
/// 1 + |A|, each seeded from derive_seed(seed, s).
EnergyPolicyParams init_energy_params(std::size_t n_states, std::size_t n_actions, int width,
                                      double radius, double tau, std::uint64_t seed);

/// Softmax over candidates h(s) of tau * f((mu(s), h(s)); theta_s), with max
/// subtraction. Throws CapExceeded above `cap` candidates.
std::vector<double> energy_policy_pmf(const EnergyPolicyParams& params, StateIndex s, int count,
                                      int n_agents, std::size_t n_actions,
                                      double cap = kDefaultCandidateCap);

class EnergyPolicy final : public TeamPolicy {
 public:
  EnergyPolicy(EnergyPolicyParams params, std::size_t n_actions, int n_agents,
               double cap = kDefaultCandidateCap);

  std::size_t n_states() const override { return params_.nets.size(); }
  std::size_t n_actions() const override { return n_actions_; }
  int n_agents() const override { return n_agents_; }
  std::vector<double> state_pmf(StateIndex s, int count) const override;
  const EnergyPolicyParams& params() const { return params_; }
  double cap() const { return cap_; }

 private:
  EnergyPolicyParams params_;
  std::size_t n_actions_;
  int n_agents_;
  double cap_;
};

/// phi(mu(s), h(s)) - E_{h' ~ pmf}[phi(mu(s), h'(s))] for a state holding
/// `count` agents; `pmf` is over `candidates`.
Matrix centered_feature(const TwoLayerNet& net, int count, const std::vector<int>& h_counts,
                        int n_agents, std::span<const double> pmf,
                        const CandidateSet& candidates);

/// grad_{theta_s} log Pi_s(h(s) | mu(s)) = tau * centered_feature.
Matrix log_policy_grad(const EnergyPolicyParams& params, StateIndex s,
                       const EmpiricalStateDist& mu, const TeamActionDist& h,
                       double cap = kDefaultCandidateCap);

/// Every Pi_s(. | count) for count = 0..N, computed once. Read-only after
/// construction; this is what samplers and the exact oracle consume.
class PolicyTable {
 public:
  explicit PolicyTable(const TeamPolicy& policy);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  int n_agents() const { return n_agents_; }

  const CandidateSet& candidates(int count) const { return candidates_.at(static_cast<std::size_t>(count)); }
  std::span<const double> pmf(StateIndex s, int count) const;

  /// Pi(h | mu) as a product over states.
  double prob(const EmpiricalStateDist& mu, const TeamActionDist& h) const;

  /// One inverse-CDF draw per state, canonical state order.
  TeamActionDist sample(const EmpiricalStateDist& mu, Rng& rng) const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  int n_agents_;
  std::vector<CandidateSet> candidates_;          // [count]
  std::vector<std::vector<std::vector<double>>> pmfs_;  // [s][count]
};

/// Per-state inverse-CDF draws from the energy policy.
TeamActionDist sample_energy_policy(const EnergyPolicyParams& params, const EmpiricalStateDist& mu,
                                    std::size_t n_actions, Rng& rng,
                                    double cap = kDefaultCandidateCap);

}  // namespace mfac
