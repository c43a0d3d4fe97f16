#include "mfac/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mfac/errors.hpp"
#include "mfac/observation.hpp"

namespace mfac {

namespace {

void check_pmf(const std::vector<double>& p, std::size_t n_actions) {
  if (p.size() != n_actions) throw std::invalid_argument("individual policy pmf has wrong length");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument("individual policy pmf has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-10)
    throw std::invalid_argument("individual policy pmf does not sum to 1");
}

}  // namespace

IndividualPolicy uniform_individual_policy(std::size_t n_actions) {
  return [n_actions](StateIndex, int, int) {
    return std::vector<double>(n_actions, 1.0 / static_cast<double>(n_actions));
  };
}

IndividualPolicy table_individual_policy(std::vector<std::vector<double>> per_state) {
  return [table = std::move(per_state)](StateIndex s, int, int) { return table.at(s); };
}

IndividualPolicy occupancy_logistic_policy(double bias, double slope) {
  return [bias, slope](StateIndex, int count, int n_agents) {
    const double z = bias + slope * static_cast<double>(count) / n_agents;
    const double p = 1.0 / (1.0 + std::exp(-z));
    return std::vector<double>{1.0 - p, p};
  };
}

std::vector<double> lift_policy(const IndividualPolicy& pi, StateIndex s, int count, int n_agents,
                                std::size_t n_actions) {
  const std::vector<double> probs = pi(s, count, n_agents);
  check_pmf(probs, n_actions);
  const auto candidates = compositions(count, n_actions);
  std::vector<double> pmf;
  pmf.reserve(candidates.size());
  for (const auto& c : candidates) pmf.push_back(multinomial_pmf(c, probs));
  return pmf;
}

RecoveredPolicy recover_individual(std::span<const double> team_pmf, int count,
                                   std::size_t n_actions) {
  if (count < 1) throw std::invalid_argument("cannot recover a policy at an empty state");
  const CandidateSet candidates = CandidateSet::build(count, n_actions);
  if (team_pmf.size() != candidates.size())
    throw std::invalid_argument("team pmf length does not match the candidate set");
  RecoveredPolicy out;
  out.probs.resize(n_actions);
  double total = 0.0;
  for (std::size_t a = 0; a < n_actions; ++a) {
    std::vector<int> dirac(n_actions, 0);
    dirac[a] = count;
    const double mass = team_pmf[candidates.find(dirac)];
    if (mass < 0.0) throw NotALift("team pmf has a negative entry");
    out.probs[a] = std::pow(mass, 1.0 / count);
    total += out.probs[a];
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw NotALift("Dirac-query roots sum to " + std::to_string(total) +
                   "; the team pmf is not a multinomial lift");
  if (std::abs(total - 1.0) > 1e-12) {
    for (double& p : out.probs) p /= total;
    out.renormalized = true;
  }
  return out;
}

TeamActionDist sample_team_action(const IndividualPolicy& pi, const EmpiricalStateDist& mu,
                                  std::size_t n_actions, Rng& rng) {
  TeamActionDist h(mu.size(), n_actions);
  for (StateIndex s = 0; s < mu.size(); ++s) {
    const int count = mu.count(s);
    if (count == 0) continue;
    const std::vector<double> probs = pi(s, count, mu.n_agents());
    check_pmf(probs, n_actions);
    for (int i = 0; i < count; ++i) h.add(s, sample_categorical(probs, rng), 1);
  }
  return h;
}

LiftedPolicy::LiftedPolicy(IndividualPolicy pi, std::size_t n_states, std::size_t n_actions,
                           int n_agents)
    : pi_(std::move(pi)), n_states_(n_states), n_actions_(n_actions), n_agents_(n_agents) {}

std::vector<double> LiftedPolicy::state_pmf(StateIndex s, int count) const {
  return lift_policy(pi_, s, count, n_agents_, n_actions_);
}

EnergyPolicyParams init_energy_params(std::size_t n_states, std::size_t n_actions, int width,
                                      double radius, double tau, std::uint64_t seed) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  EnergyPolicyParams params;
  params.tau = tau;
  for (StateIndex s = 0; s < n_states; ++s)
    params.nets.push_back(TwoLayerNet::initialize(width, static_cast<int>(1 + n_actions), radius,
                                                  derive_seed(seed, s)));
  return params;
}

namespace {

std::vector<double> softmax_energies(const TwoLayerNet& net, double tau, int count, int n_agents,
                                     const std::vector<std::vector<int>>& candidates) {
  std::vector<double> logits;
  logits.reserve(candidates.size());
  for (const auto& c : candidates)
    logits.push_back(tau * net.forward(encode_state_input(count, c, n_agents)));
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logits) v /= total;
  return logits;
}

void check_cap(int count, std::size_t n_actions, double cap) {
  const double size = composition_count(count, n_actions);
  if (size > cap)
    throw CapExceeded("per-state candidate set has " + std::to_string(size) +
                      " elements, above the cap of " + std::to_string(cap));
}

}  // namespace

std::vector<double> energy_policy_pmf(const EnergyPolicyParams& params, StateIndex s, int count,
                                      int n_agents, std::size_t n_actions, double cap) {
  check_cap(count, n_actions, cap);
  return softmax_energies(params.nets.at(s), params.tau, count, n_agents,
                          compositions(count, n_actions));
}

EnergyPolicy::EnergyPolicy(EnergyPolicyParams params, std::size_t n_actions, int n_agents,
                           double cap)
    : params_(std::move(params)), n_actions_(n_actions), n_agents_(n_agents), cap_(cap) {}

std::vector<double> EnergyPolicy::state_pmf(StateIndex s, int count) const {
  return energy_policy_pmf(params_, s, count, n_agents_, n_actions_, cap_);
}

Matrix centered_feature(const TwoLayerNet& net, int count, const std::vector<int>& h_counts,
                        int n_agents, std::span<const double> pmf,
                        const CandidateSet& candidates) {
  if (pmf.size() != candidates.size())
    throw std::invalid_argument("pmf and candidate set differ in size");
  Matrix phi = net.feature_map(encode_state_input(count, h_counts, n_agents));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (pmf[i] == 0.0) continue;
    phi -= pmf[i] * net.feature_map(encode_state_input(count, candidates.items[i], n_agents));
  }
  return phi;
}

Matrix log_policy_grad(const EnergyPolicyParams& params, StateIndex s,
                       const EmpiricalStateDist& mu, const TeamActionDist& h, double cap) {
  const int count = mu.count(s);
  check_cap(count, h.n_actions(), cap);
  const CandidateSet candidates = CandidateSet::build(count, h.n_actions());
  const auto pmf = softmax_energies(params.nets.at(s), params.tau, count, mu.n_agents(),
                                    candidates.items);
  return params.tau *
         centered_feature(params.nets.at(s), count, h.row_vector(s), mu.n_agents(), pmf, candidates);
}

PolicyTable::PolicyTable(const TeamPolicy& policy)
    : n_states_(policy.n_states()), n_actions_(policy.n_actions()), n_agents_(policy.n_agents()) {
  for (int count = 0; count <= n_agents_; ++count)
    candidates_.push_back(CandidateSet::build(count, n_actions_));
  pmfs_.resize(n_states_);
  for (StateIndex s = 0; s < n_states_; ++s) {
    for (int count = 0; count <= n_agents_; ++count) {
      auto pmf = policy.state_pmf(s, count);
      if (pmf.size() != candidates_[static_cast<std::size_t>(count)].size())
        throw std::logic_error("team policy pmf does not match the candidate set");
      pmfs_[s].push_back(std::move(pmf));
    }
  }
}

std::span<const double> PolicyTable::pmf(StateIndex s, int count) const {
  return pmfs_.at(s).at(static_cast<std::size_t>(count));
}

double PolicyTable::prob(const EmpiricalStateDist& mu, const TeamActionDist& h) const {
  double p = 1.0;
  for (StateIndex s = 0; s < n_states_; ++s) {
    const int count = mu.count(s);
    p *= pmf(s, count)[candidates(count).find(h.row_vector(s))];
  }
  return p;
}

TeamActionDist PolicyTable::sample(const EmpiricalStateDist& mu, Rng& rng) const {
  TeamActionDist h(n_states_, n_actions_);
  for (StateIndex s = 0; s < n_states_; ++s) {
    const int count = mu.count(s);
    if (count == 0) continue;
    const std::size_t pick = sample_categorical(pmf(s, count), rng);
    h.set_row(s, candidates(count).items[pick]);
  }
  return h;
}

TeamActionDist sample_energy_policy(const EnergyPolicyParams& params, const EmpiricalStateDist& mu,
                                    std::size_t n_actions, Rng& rng, double cap) {
  TeamActionDist h(mu.size(), n_actions);
  for (StateIndex s = 0; s < mu.size(); ++s) {
    const int count = mu.count(s);
    if (count == 0) continue;
    check_cap(count, n_actions, cap);
    const auto candidates = compositions(count, n_actions);
    const auto pmf = softmax_energies(params.nets.at(s), params.tau, count, mu.n_agents(), candidates);
    h.set_row(s, candidates[sample_categorical(pmf, rng)]);
  }
  return h;
}

}  // namespace mfac
