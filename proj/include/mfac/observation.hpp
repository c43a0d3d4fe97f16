#pragma once

#include <vector>

#include "mfac/env.hpp"
#include "mfac/graph.hpp"

namespace mfac {

/// Everything a localized learner may see of a (mu, h) pair around one state:
/// occupancy and action counts restricted to N^k_center. Critic residuals,
/// critic evaluations and the localized gradient estimator only ever read
/// through this type, which is what makes training local.
struct LocalObservation {
  StateIndex center = 0;
  int radius = 0;
  std::vector<StateIndex> members;
  std::vector<int> mu_counts;           // one per member
  std::vector<std::vector<int>> h_counts;  // one row of |A| counts per member
  int n_agents = 0;

  /// Canonical key (mu counts, then h rows) identifying the window contents.
  std::vector<int> key() const;

  friend bool operator==(const LocalObservation&, const LocalObservation&) = default;
};

/// Reads mu and h on N^k_s only.
LocalObservation observe(const StateGraph& graph, const EmpiricalStateDist& mu,
                         const TeamActionDist& h, StateIndex s, int k);

/// Network input for a window: mu entries of the members, then each member's
/// h row as proportions (zeros for empty states), all scaled by 1/sqrt(2) so
/// the Euclidean norm is at most 1. Dimension |window| * (1 + |A|).
std::vector<double> encode(const LocalObservation& obs);

/// Actor input (mu(s), h(s)) / sqrt(2) for one state, given its count and
/// its action counts.
std::vector<double> encode_state_input(int count, const std::vector<int>& action_counts,
                                       int n_agents);

std::size_t encoded_dim(std::size_t window_size, std::size_t n_actions);

}  // namespace mfac
