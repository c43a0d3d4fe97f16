#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"

#include "mfac/env.hpp"
#include "mfac/errors.hpp"
#include "mfac/oracle.hpp"

using namespace mfac;

namespace {

const std::size_t kStay = 0, kMove = 1;

double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) t += std::abs(p[i] - q[i]);
  return 0.5 * t;
}

}  // namespace

TEST_CASE("empirical and team distributions of profiles") {
  AgentProfile p{{0, 0, 1, 2}, {kStay, kMove, kStay, kStay}};
  CHECK(empirical_of(p, 3).counts() == std::vector<int>{2, 1, 1});
  const TeamActionDist h = team_dist_of(p, 3, 2);
  CHECK(h.row_vector(0) == std::vector<int>{1, 1});
  CHECK(h.row_vector(1) == std::vector<int>{1, 0});
  CHECK(h.row_vector(2) == std::vector<int>{1, 0});

  AgentProfile perm{{2, 1, 0, 0}, {kStay, kStay, kMove, kStay}};
  CHECK(empirical_of(perm, 3) == empirical_of(p, 3));
  CHECK(team_dist_of(perm, 3, 2) == h);

  AgentProfile all{{0, 0, 0, 0}, {}};
  CHECK(empirical_of(all, 3).counts() == std::vector<int>{4, 0, 0});

  AgentProfile one{{1}, {kMove}};
  CHECK(team_dist_of(one, 3, 2).flat() == std::vector<int>{0, 0, 0, 1, 0, 0});
}

TEST_CASE("distribution invariants") {
  const EmpiricalStateDist mu({2, 1, 1});
  CHECK(mu.n_agents() == 4);
  CHECK(mu.fraction(0) == 0.5);
  CHECK_THROWS_AS(EmpiricalStateDist({-1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(EmpiricalStateDist({0, 0}), std::invalid_argument);

  TeamActionDist h(3, 2);
  h.set(0, 0, 1);
  h.set(0, 1, 1);
  h.set(1, 0, 1);
  CHECK_FALSE(h.compatible_with(mu));
  h.set(2, 1, 1);
  CHECK(h.compatible_with(mu));
  CHECK(h.proportions(0) == std::vector<double>{0.5, 0.5});
  CHECK(h.occupancy(2) == 1);

  TeamActionDist empty_row(3, 2);
  CHECK(empty_row.proportions(1) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("canonical line3 instance") {
  const Instance inst = canonical_line3();
  CHECK(inst.graph.size() == 3);
  CHECK(inst.model.gamma == 0.5);
  CHECK(inst.model.n_agents == 4);
  CHECK(inst.model.r_max == 1.0);
  CHECK(inst.model.actions.size() == 2);
  CHECK(inst.initial.support.front().counts() == std::vector<int>{2, 1, 1});
  CHECK_NOTHROW(validate_model(inst.model, inst.graph));
}

TEST_CASE("local team reward and global stage reward") {
  const Instance inst = canonical_line3();
  const EmpiricalStateDist mu({2, 1, 1});
  const auto local1 = local_mean_field(inst.graph, mu, 1);
  const std::vector<double> stay{1.0, 0.0};
  CHECK(local_team_reward(inst.model, local1, stay) == doctest::Approx(0.75).epsilon(1e-15));
  const std::vector<double> none{0.0, 0.0};
  CHECK(local_team_reward(inst.model, local1, none) == 0.0);
  const std::vector<double> bad{-0.5, 1.5};
  CHECK_THROWS(local_team_reward(inst.model, local1, bad));

  ModelSpec indicator = inst.model;
  indicator.reward = action_indicator_reward(kStay, 1.0);
  const std::vector<double> half{0.5, 0.5};
  CHECK(local_team_reward(indicator, local1, half) == 0.5);

  // sum_s mu(s)(1 - mu(s)) = 0.625 for any h.
  for (const auto& flat : {std::vector<int>{2, 0, 1, 0, 1, 0}, std::vector<int>{0, 2, 0, 1, 0, 1},
                           std::vector<int>{1, 1, 0, 1, 1, 0}}) {
    const TeamActionDist h(2, flat);
    CHECK(global_stage_reward(inst.model, inst.graph, mu, h) == doctest::Approx(0.625).epsilon(1e-15));
  }

  // One occupied state with a point-mass action.
  const EmpiricalStateDist all({0, 4, 0});
  const TeamActionDist h(2, {0, 0, 4, 0, 0, 0});
  CHECK(global_stage_reward(inst.model, inst.graph, all, h) == 0.0);
  CHECK(team_stage_reward(inst.model, inst.graph, 1, all, h) == 0.0);
  const EmpiricalStateDist mixed({3, 1, 0});
  const TeamActionDist hm(2, {3, 0, 1, 0, 0, 0});
  CHECK(team_stage_reward(inst.model, inst.graph, 0, mixed, hm) == doctest::Approx(0.75 * 0.25));
}

TEST_CASE("agent step dynamics") {
  const Instance inst = canonical_line3();
  Rng rng(3);
  AgentProfile p{{0, 0, 1, 2}, {kStay, kStay, kStay, kStay}};
  const AgentStepResult r = agent_step(inst.model, inst.graph, p, rng);
  CHECK(r.next.states == p.states);
  CHECK(r.rewards == std::vector<double>{0.5, 0.5, 0.75, 0.75});

  AgentProfile move{{0, 0, 1, 2}, {kMove, kMove, kStay, kStay}};
  for (int i = 0; i < 20; ++i) {
    const AgentStepResult m = agent_step(inst.model, inst.graph, move, rng);
    CHECK(m.next.states[0] == 1);
    CHECK(m.next.states[1] == 1);
  }
  AgentProfile missing{{0, 1}, {}};
  CHECK_THROWS(agent_step(inst.model, inst.graph, missing, rng));
}

TEST_CASE("team step matches the exact kernel") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const EmpiricalStateDist mu({2, 1, 1});

  const TeamActionDist stay(2, {2, 0, 1, 0, 1, 0});
  Rng rng(11);
  for (int i = 0; i < 10; ++i) CHECK(team_sample_step(inst.model, inst.graph, mu, stay, rng) == mu);

  const TeamActionDist forced(2, {0, 2, 1, 0, 0, 1});
  for (int i = 0; i < 50; ++i) CHECK(team_sample_step(inst.model, inst.graph, mu, forced, rng).count(0) == 0);

  const TeamActionDist mixed(2, {1, 1, 0, 1, 1, 0});
  const auto exact = oracle.exact_team_kernel(mu, mixed);
  std::vector<double> freq(exact.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto next = team_sample_step(inst.model, inst.graph, mu, mixed, rng);
    CHECK(next.n_agents() == 4);
    freq[oracle.xi().mu_index(next)] += 1.0 / n;
  }
  CHECK(tv(freq, exact) <= 0.02);

  // Agent-level steps from a profile realizing (mu, h) follow the same law.
  std::vector<double> agent_freq(exact.size(), 0.0);
  AgentProfile prof{{2, 0, 1, 0}, {kStay, kMove, kMove, kStay}};
  for (int i = 0; i < n; ++i) {
    const auto r = agent_step(inst.model, inst.graph, prof, rng);
    agent_freq[oracle.xi().mu_index(empirical_of(r.next, 3))] += 1.0 / n;
  }
  CHECK(tv(agent_freq, exact) <= 0.02);

  CHECK_THROWS(team_sample_step(inst.model, inst.graph, mu, TeamActionDist(2, {1, 0, 0, 0, 0, 0}), rng));
}

TEST_CASE("moves stay inside the one-hop neighborhood") {
  const StateGraph g = line_graph(5);
  ModelSpec m;
  m.actions = {"stay", "move"};
  m.reward = congestion_reward(1.0, 1.0);
  m.kernel = crowd_averse_kernel(5, 0, 0.8);
  m.n_agents = 6;
  Rng rng(5);
  AgentProfile p{{0, 1, 2, 2, 3, 4}, {1, 1, 1, 1, 1, 1}};
  for (int i = 0; i < 200; ++i) {
    const auto r = agent_step(m, g, p, rng);
    for (std::size_t a = 0; a < p.states.size(); ++a)
      CHECK(g.distance(p.states[a], r.next.states[a]) <= 1);
    CHECK(empirical_of(r.next, 5).n_agents() == 6);
  }
}

TEST_CASE("model validation rejects bad kernels and rewards") {
  const Instance inst = canonical_line3();
  ModelSpec leaky = inst.model;
  leaky.kernel = uniform_global_kernel(3);
  CHECK_THROWS_AS(validate_model(leaky, inst.graph), ModelError);

  ModelSpec loud = inst.model;
  loud.reward = constant_reward(2.0);
  CHECK_THROWS_AS(validate_model(loud, inst.graph), ModelError);

  ModelSpec unnormalized = inst.model;
  unnormalized.kernel = [](const LocalMeanField& local, std::size_t) {
    std::vector<double> pmf(3, 0.0);
    pmf[local.center] = 0.9;
    return pmf;
  };
  CHECK_THROWS_AS(validate_model(unnormalized, inst.graph), ModelError);

  ModelSpec bad_gamma = inst.model;
  bad_gamma.gamma = 1.0;
  CHECK_THROWS_AS(validate_model(bad_gamma, inst.graph), ModelError);

  // The agent simulator refuses to move agents with an invalid kernel.
  Rng rng(1);
  AgentProfile p{{0}, {kMove}};
  CHECK_THROWS_AS(agent_step(leaky, inst.graph, p, rng), ModelError);
}

TEST_CASE("permutation invariance of step statistics") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  AgentProfile a{{0, 0, 1, 2}, {kMove, kStay, kMove, kMove}};
  AgentProfile b{{2, 1, 0, 0}, {kMove, kMove, kStay, kMove}};
  std::vector<double> fa(oracle.xi().n_mus(), 0.0), fb(fa.size(), 0.0);
  Rng rng(9);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    fa[oracle.xi().mu_index(empirical_of(agent_step(inst.model, inst.graph, a, rng).next, 3))] += 1.0 / n;
    fb[oracle.xi().mu_index(empirical_of(agent_step(inst.model, inst.graph, b, rng).next, 3))] += 1.0 / n;
  }
  CHECK(tv(fa, fb) <= 0.03);
}
