#include "mfac/observation.hpp"

#include <cmath>

namespace mfac {

namespace {
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);
}

std::vector<int> LocalObservation::key() const {
  std::vector<int> k(mu_counts);
  for (const auto& row : h_counts) k.insert(k.end(), row.begin(), row.end());
  return k;
}

LocalObservation observe(const StateGraph& graph, const EmpiricalStateDist& mu,
                         const TeamActionDist& h, StateIndex s, int k) {
  LocalObservation obs;
  obs.center = s;
  obs.radius = k;
  obs.members = graph.hop_members(s, k);
  obs.n_agents = mu.n_agents();
  obs.mu_counts.reserve(obs.members.size());
  obs.h_counts.reserve(obs.members.size());
  for (StateIndex t : obs.members) {
    obs.mu_counts.push_back(mu.count(t));
    obs.h_counts.push_back(h.row_vector(t));
  }
  return obs;
}

std::vector<double> encode(const LocalObservation& obs) {
  const std::size_t n_actions = obs.h_counts.empty() ? 0 : obs.h_counts.front().size();
  std::vector<double> x;
  x.reserve(encoded_dim(obs.members.size(), n_actions));
  for (int c : obs.mu_counts) x.push_back(kInvSqrt2 * c / obs.n_agents);
  for (const auto& row : obs.h_counts) {
    int total = 0;
    for (int c : row) total += c;
    for (int c : row) x.push_back(total == 0 ? 0.0 : kInvSqrt2 * c / total);
  }
  return x;
}

std::vector<double> encode_state_input(int count, const std::vector<int>& action_counts,
                                       int n_agents) {
  std::vector<double> x;
  x.reserve(1 + action_counts.size());
  x.push_back(kInvSqrt2 * count / n_agents);
  for (int c : action_counts) x.push_back(count == 0 ? 0.0 : kInvSqrt2 * c / count);
  return x;
}

std::size_t encoded_dim(std::size_t window_size, std::size_t n_actions) {
  return window_size * (1 + n_actions);
}

}  // namespace mfac
