#include <cmath>

#include "doctest.h"

#include "mfac/ltde.hpp"
#include "mfac/observation.hpp"
#include "mfac/oracle.hpp"

using namespace mfac;

namespace {

double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) t += std::abs(p[i] - q[i]);
  return 0.5 * t;
}

Instance constant_line3(double value) {
  Instance inst = canonical_line3();
  inst.model.reward = constant_reward(value);
  return inst;
}

}  // namespace

TEST_CASE("TD residual arithmetic") {
  const StateGraph g = line_graph(3);
  Matrix W(1, 3);
  W << 0.8 * std::sqrt(2.0), 0.0, 0.0;
  const auto net = TwoLayerNet::from_parameters(W, {1}, 10.0);
  const auto obs = observe(g, EmpiricalStateDist({2, 1, 1}), TeamActionDist(2, {2, 0, 1, 0, 0, 1}), 0, 0);
  const auto next = observe(g, EmpiricalStateDist({1, 2, 1}), TeamActionDist(2, {1, 0, 1, 1, 0, 1}), 0, 0);
  CHECK(net.forward(encode(obs)) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(net.forward(encode(next)) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(td_residual(net, obs, 0.75, next, 0.5) == doctest::Approx(-0.45).epsilon(1e-14));
}

TEST_CASE("stationary stream tuples") {
  const Instance inst = canonical_line3();
  const PolicyTable stay(LiftedPolicy(table_individual_policy({{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}), 3, 2, 4));
  StationaryStream frozen(inst.model, inst.graph, stay, inst.initial, 50, 1);
  for (int i = 0; i < 20; ++i) {
    const auto t = frozen.next();
    CHECK(t.mu.counts() == std::vector<int>{2, 1, 1});
    CHECK(t.mu_next == t.mu);
  }

  const PolicyTable table(LiftedPolicy(uniform_individual_policy(2), 3, 2, 4));
  StationaryStream stream(inst.model, inst.graph, table, inst.initial, 10, 2);
  auto prev = stream.next();
  for (int i = 0; i < 200; ++i) {
    CHECK(prev.rewards == team_rewards(inst.model, inst.graph, prev.mu, prev.h));
    for (StateIndex s = 0; s < 3; ++s)
      CHECK(prev.rewards[s] == team_stage_reward(inst.model, inst.graph, s, prev.mu, prev.h));
    CHECK(prev.h.compatible_with(prev.mu));
    CHECK(prev.h_next.compatible_with(prev.mu_next));
    const auto cur = stream.next();
    CHECK(cur.mu == prev.mu_next);
    CHECK(cur.h == prev.h_next);
    prev = cur;
  }

  Rng a(4), b(4);
  const auto ta = sample_stationary_tuple(inst.model, inst.graph, table, inst.initial, 30, a);
  const auto tb = sample_stationary_tuple(inst.model, inst.graph, table, inst.initial, 30, b);
  CHECK(ta.mu_next == tb.mu_next);
  CHECK(ta.h_next == tb.h_next);
}

TEST_CASE("visitation stream") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const PolicyTable table(LiftedPolicy(occupancy_logistic_policy(0.3, -1.0), 3, 2, 4));
  const auto rho0 = oracle.initial_weights(oracle.policy_weights(table), inst.initial);
  VisitationStream restart(inst.model, inst.graph, table, inst.initial, 1e-12, 3);
  std::vector<double> freq(oracle.xi().size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto [mu, h] = restart.next();
    freq[oracle.xi().index(mu, h)] += 1.0 / n;
  }
  CHECK(tv(freq, rho0) <= 0.02);

  VisitationStream x(inst.model, inst.graph, table, inst.initial, 0.5, 10), y(inst.model, inst.graph, table, inst.initial, 0.5, 10);
  for (int i = 0; i < 100; ++i) CHECK(x.next() == y.next());
  Rng ra(6), rb(6);
  CHECK(sample_visitation_pair(inst.model, inst.graph, table, inst.initial, 0.5, ra) ==
        sample_visitation_pair(inst.model, inst.graph, table, inst.initial, 0.5, rb));
}

TEST_CASE("critic steps: box, averaging and per-state independence") {
  const Instance inst = canonical_line3();
  const PolicyTable table(LiftedPolicy(uniform_individual_policy(2), 3, 2, 4));
  CriticConfig cfg;
  cfg.width = 16;
  cfg.radius = 1.0;
  cfg.k = 1;
  cfg.step_size = 0.5;
  CriticState forward = init_critic(inst.model, inst.graph, cfg, 9);
  CriticState backward = init_critic(inst.model, inst.graph, cfg, 9);
  std::vector<Matrix> manual_sum(3, Matrix::Zero(forward.nets[0].width(), forward.nets[0].in_dim()));
  StationaryStream stream(inst.model, inst.graph, table, inst.initial, 20, 8);
  for (int t = 0; t < 300; ++t) {
    const auto tuple = stream.next();
    for (StateIndex s = 0; s < 3; ++s) {
      critic_step(forward, inst.graph, tuple, s, inst.model.gamma);
      manual_sum[s] += forward.nets[s].weights();
      CHECK(forward.nets[s].max_deviation() <= forward.nets[s].box_half_width() + 1e-15);
    }
    for (StateIndex s = 3; s-- > 0;) critic_step(backward, inst.graph, tuple, s, inst.model.gamma);
  }
  for (StateIndex s = 0; s < 3; ++s) {
    CHECK(forward.nets[s].weights() == backward.nets[s].weights());
    CHECK(forward.steps[s] == 300);
    const Matrix mean = manual_sum[s] / 300.0;
    CHECK((forward.averaged(s).weights() - mean).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(forward.averaged(s).max_deviation() <= forward.nets[s].box_half_width() + 1e-12);
    CHECK(forward.mean_sq_residual(s) >= 0.0);
  }

  const CriticState fresh = init_critic(inst.model, inst.graph, cfg, 9);
  CHECK(fresh.averaged(0).weights() == fresh.nets[0].weights());
  CHECK(CriticConfig{}.resolved_step_size(0.5) == doctest::Approx(std::min(0.5 / 8, 1.0 / std::sqrt(20000.0))));
}

TEST_CASE("critic training is seeded") {
  const Instance inst = canonical_line3();
  const PolicyTable table(LiftedPolicy(uniform_individual_policy(2), 3, 2, 4));
  CriticConfig cfg;
  cfg.width = 32;
  cfg.iterations = 500;
  cfg.k = 1;
  const auto a = critic_train(inst.model, inst.graph, table, inst.initial, cfg, 5);
  const auto b = critic_train(inst.model, inst.graph, table, inst.initial, cfg, 5);
  for (StateIndex s = 0; s < 3; ++s) {
    CHECK(a.averaged(s).weights() == b.averaged(s).weights());
    CHECK(a.steps[s] == cfg.iterations - 1);
  }
}

TEST_CASE("gradient estimator with a constant critic") {
  const Instance inst = canonical_line3();
  const auto params = init_energy_params(3, 2, 8, 10.0, 1.7, 3);
  const PolicyTable table(EnergyPolicy(params, 2, 4));
  VisitationStream stream(inst.model, inst.graph, table, inst.initial, inst.model.gamma, 12);
  std::vector<std::pair<EmpiricalStateDist, TeamActionDist>> batch;
  for (int i = 0; i < 64; ++i) batch.push_back(stream.next());
  const LocalCritic constant = [](StateIndex, const LocalObservation&) { return 0.9; };
  for (int k = 0; k <= 2; ++k)
    for (StateIndex s = 0; s < 3; ++s) {
      const Matrix g = ghat_estimate(batch, constant, params, inst.graph, s, k, inst.model.gamma);
      Matrix phi_sum = Matrix::Zero(g.rows(), g.cols());
      for (const auto& [mu, h] : batch) phi_sum += log_policy_grad(params, s, mu, h) / params.tau;
      const double scale = 0.9 * inst.graph.k_hop(s, k).size() * params.tau /
                           ((1 - inst.model.gamma) * batch.size());
      CHECK((g - scale * phi_sum).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("estimator expectation equals the localized gradient") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const auto params = init_energy_params(3, 2, 8, 10.0, 2.0, 19);
  const PolicyTable table(EnergyPolicy(params, 2, 4));
  const auto pi_w = oracle.policy_weights(table);
  const auto sigma = oracle.exact_visitation(pi_w, inst.initial, inst.model.gamma, 1e-12);
  const auto& xi = oracle.xi();
  std::vector<std::pair<EmpiricalStateDist, TeamActionDist>> all;
  for (std::size_t x = 0; x < xi.size(); ++x) all.emplace_back(xi.mu(xi.mu_of(x)), xi.h(x));

  for (int k = 0; k <= 2; ++k) {
    std::vector<TruncatedQ> trunc;
    for (StateIndex y = 0; y < 3; ++y)
      trunc.push_back(oracle.truncated_q(oracle.exact_team_q(pi_w, y, 1e-12), y, k, TruncationWeights::uniform));
    const LocalCritic exact = [&](StateIndex y, const LocalObservation& obs) {
      return trunc[y].by_window.at(obs.key());
    };
    for (StateIndex s = 0; s < 3; ++s) {
      const Matrix g = ghat_weighted(all, sigma, exact, params, inst.graph, s, k, inst.model.gamma);
      const Matrix ref = localized_policy_grad(oracle, params, inst.initial, s, k);
      CHECK((g - ref).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("actor on a flat landscape") {
  const Instance inst = constant_line3(0.6);
  const ExactOracle oracle(inst.model, inst.graph);
  ActorConfig cfg;
  cfg.width = 8;
  cfg.iterations = 3;
  cfg.batch = 16;
  cfg.k = 1;
  cfg.critic.width = 16;
  cfg.critic.iterations = 100;
  const auto run = actor_train(inst.model, inst.graph, inst.initial, cfg, 4, &oracle);
  CHECK(run.log.size() == 4);
  for (const auto& it : run.log) {
    REQUIRE(it.j.has_value());
    CHECK(*it.j == doctest::Approx(1.2).epsilon(1e-7));
  }
  for (StateIndex s = 0; s < 3; ++s)
    CHECK(run.final_params.nets[s].max_deviation() <= run.final_params.nets[s].box_half_width() + 1e-15);
  CHECK(cfg.resolved_step_size() == doctest::Approx(1.0 / std::sqrt(3.0)));
}

TEST_CASE("actor runs are reproducible and keep the best iterate") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  ActorConfig cfg;
  cfg.width = 16;
  cfg.iterations = 4;
  cfg.batch = 32;
  cfg.k = 1;
  cfg.step_size = 2.0;
  cfg.critic.width = 32;
  cfg.critic.iterations = 300;
  cfg.critic.step_size = 0.25;
  int calls = 0;
  const auto a = actor_train(inst.model, inst.graph, inst.initial, cfg, 11, &oracle,
                             [&](const ActorIterate&) { ++calls; });
  const auto b = actor_train(inst.model, inst.graph, inst.initial, cfg, 11, &oracle);
  CHECK(calls == 5);
  REQUIRE(a.best_j.has_value());
  for (std::size_t t = 0; t < a.log.size(); ++t) {
    CHECK(a.log[t].j == b.log[t].j);
    CHECK(*a.log[t].j <= *a.best_j);
  }
  CHECK(exact_j(oracle, a.best, inst.initial) == doctest::Approx(*a.best_j).epsilon(1e-9));
  CHECK(exact_j(oracle, a.initial, inst.initial) == doctest::Approx(*a.log[0].j).epsilon(1e-9));
  for (StateIndex s = 0; s < 3; ++s) CHECK(a.final_params.nets[s].weights() == b.final_params.nets[s].weights());

  // Without an oracle J comes from rollouts every mc_every iterations.
  cfg.mc_every = 2;
  cfg.mc_rollouts = 50;
  const auto mc = actor_train(inst.model, inst.graph, inst.initial, cfg, 11);
  for (const auto& it : mc.log) CHECK(it.j.has_value() == (it.iteration % 2 == 0 || it.iteration == cfg.iterations));
}
