#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"

#include "mfac/errors.hpp"
#include "mfac/ltde.hpp"
#include "mfac/oracle.hpp"

using namespace mfac;

namespace {

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) t += std::abs(p[i] - q[i]);
  return 0.5 * t;
}

Instance with_reward(Instance inst, RewardFn r) {
  inst.model.reward = std::move(r);
  return inst;
}

std::vector<double> lifted_weights(const ExactOracle& oracle, IndividualPolicy pi) {
  const auto& m = oracle.model();
  const PolicyTable table(LiftedPolicy(std::move(pi), oracle.graph().size(), m.n_actions(), m.n_agents));
  return oracle.policy_weights(table);
}

std::vector<double> energy_weights(const ExactOracle& oracle, const EnergyPolicyParams& params) {
  const auto& m = oracle.model();
  return oracle.policy_weights(PolicyTable(EnergyPolicy(params, m.n_actions(), m.n_agents)));
}

std::vector<double> aggregate_q(const ExactOracle& oracle, const std::vector<double>& pi_w) {
  std::vector<double> q(oracle.xi().size(), 0.0);
  for (StateIndex s = 0; s < oracle.graph().size(); ++s) {
    const auto qs = oracle.exact_team_q(pi_w, s);
    for (std::size_t x = 0; x < q.size(); ++x) q[x] += qs[x];
  }
  return q;
}

}  // namespace

TEST_CASE("enumeration sizes and index bijection") {
  const XiSpace xi(3, 2, 4);
  CHECK(xi.n_mus() == 15);
  CHECK(xi.size() == 126);
  const EmpiricalStateDist mu({2, 1, 1});
  CHECK(xi.h_count(xi.mu_index(mu)) == 12);
  for (std::size_t x = 0; x < xi.size(); ++x) {
    CHECK(xi.index(xi.mu(xi.mu_of(x)), xi.h(x)) == x);
    CHECK(xi.h(x).compatible_with(xi.mu(xi.mu_of(x))));
  }
  for (std::size_t m = 0; m < xi.n_mus(); ++m) CHECK(xi.mu_index(xi.mu(m)) == m);
  // Colex order: the last coordinate is most significant.
  CHECK(xi.mu(0).counts() == std::vector<int>{4, 0, 0});
  CHECK(xi.mu(xi.n_mus() - 1).counts() == std::vector<int>{0, 0, 4});

  CHECK(XiSpace::size_bound(3, 2, 4) == 15.0 * 12.0);
  CHECK_THROWS_AS(XiSpace(3, 2, 40), CapExceeded);
  CHECK_THROWS_AS(XiSpace(3, 2, 4, 100), CapExceeded);
}

TEST_CASE("team kernel edge cases") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const EmpiricalStateDist mu({2, 1, 1});
  const auto stay = oracle.exact_team_kernel(mu, TeamActionDist(2, {2, 0, 1, 0, 1, 0}));
  CHECK(stay[oracle.xi().mu_index(mu)] == 1.0);

  ModelSpec pair = inst.model;
  pair.n_agents = 2;
  const ExactOracle small(pair, inst.graph);
  const auto forced = small.exact_team_kernel(EmpiricalStateDist({2, 0, 0}), TeamActionDist(2, {0, 2, 0, 0, 0, 0}));
  CHECK(forced[small.xi().mu_index(EmpiricalStateDist({0, 2, 0}))] == 1.0);

  for (std::size_t x = 0; x < oracle.xi().size(); ++x) {
    double row = 0.0;
    for (const auto& [m, p] : oracle.transition_row(x)) {
      CHECK(p >= 0.0);
      row += p;
    }
    CHECK(std::abs(row - 1.0) <= 1e-12);
  }
}

TEST_CASE("local dependence of the kernel marginal") {
  // mu'(s) depends on (mu, h) only through mu on N^2_s and h on N^1_s.
  const StateGraph g = line_graph(4);
  ModelSpec m;
  m.actions = {"stay", "move"};
  m.reward = congestion_reward(1.0, 1.0);
  m.kernel = crowd_averse_kernel(4, 0, 0.6);
  m.n_agents = 3;
  m.gamma = 0.5;
  const ExactOracle oracle(m, g);
  const auto& xi = oracle.xi();
  for (StateIndex s = 0; s < g.size(); ++s) {
    std::map<std::vector<int>, std::vector<double>> seen;
    int shared = 0;
    for (std::size_t x = 0; x < xi.size(); ++x) {
      const auto& mu = xi.mu(xi.mu_of(x));
      const auto& h = xi.h(x);
      std::vector<int> key;
      for (StateIndex t : g.hop_members(s, 2)) key.push_back(mu.count(t));
      for (StateIndex t : g.hop_members(s, 1))
        for (int c : h.row_vector(t)) key.push_back(c);
      std::vector<double> marginal(m.n_agents + 1, 0.0);
      for (const auto& [mi, p] : oracle.transition_row(x)) marginal[xi.mu(mi).count(s)] += p;
      auto [it, inserted] = seen.emplace(key, marginal);
      if (!inserted) {
        ++shared;
        CHECK(sup_diff(it->second, marginal) <= 1e-14);
      }
    }
    CHECK(shared > 0);
  }
}

TEST_CASE("bellman operator") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const auto pi_w = lifted_weights(oracle, uniform_individual_policy(2));
  const std::size_t n = oracle.xi().size();

  const std::vector<double> rbar(n, 0.3), c(n, 2.0);
  for (double v : oracle.bellman_apply(pi_w, c, rbar)) CHECK(v == doctest::Approx(0.3 + 0.5 * 2.0).epsilon(1e-14));

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> f(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = 4.0 * uniform01(rng) - 2.0;
      g[i] = 4.0 * uniform01(rng) - 2.0;
    }
    const StateIndex s = trial % 3;
    const double lhs = sup_diff(oracle.bellman_apply(pi_w, f, s), oracle.bellman_apply(pi_w, g, s));
    CHECK(lhs <= inst.model.gamma * sup_diff(f, g) + 1e-12);
  }
}

TEST_CASE("team Q values") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const double gamma = inst.model.gamma, tol = 1e-10;
  const double bound = inst.model.r_max / (1.0 - gamma);

  const auto pi_w = lifted_weights(oracle, occupancy_logistic_policy(0.2, -1.5));
  const std::size_t n = oracle.xi().size();
  for (double v : oracle.evaluate_q(pi_w, std::vector<double>(n, 0.4), tol))
    CHECK(std::abs(v - 0.4 / (1.0 - gamma)) <= tol);

  std::vector<double> sum(n, 0.0);
  for (StateIndex s = 0; s < 3; ++s) {
    const auto q = oracle.exact_team_q(pi_w, s, tol);
    for (std::size_t x = 0; x < n; ++x) {
      CHECK(std::abs(q[x]) <= bound);
      sum[x] += q[x];
    }
  }
  // Summing team Q over states and averaging out h recovers the value
  // computed on state distributions alone.
  const auto v = oracle.exact_team_value(pi_w, tol);
  const auto& xi = oracle.xi();
  for (std::size_t m = 0; m < xi.n_mus(); ++m) {
    double e = 0.0;
    for (std::size_t x = xi.offset(m); x < xi.offset(m + 1); ++x) e += pi_w[x] * sum[x];
    CHECK(std::abs(e - v[m]) <= 2 * tol);
  }
}

TEST_CASE("team Q against discounted rollouts") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const IndividualPolicy pi = occupancy_logistic_policy(0.5, -1.0);
  const PolicyTable table(LiftedPolicy(pi, 3, 2, 4));
  const auto pi_w = oracle.policy_weights(table);
  const auto q = oracle.exact_team_q(pi_w, 1, 1e-12);

  const EmpiricalStateDist mu0({2, 1, 1});
  const TeamActionDist h0(2, {1, 1, 0, 1, 1, 0});
  Rng rng(2024);
  const int rollouts = 100000, horizon = 40;
  double mean = 0.0;
  for (int r = 0; r < rollouts; ++r) {
    EmpiricalStateDist mu = mu0;
    TeamActionDist h = h0;
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      ret += disc * team_stage_reward(inst.model, inst.graph, 1, mu, h);
      disc *= inst.model.gamma;
      mu = team_sample_step(inst.model, inst.graph, mu, h, rng);
      h = table.sample(mu, rng);
    }
    mean += ret / rollouts;
  }
  const double exact = q[oracle.xi().index(mu0, h0)];
  CHECK(std::abs(mean - exact) <= 1e-2 * exact);
}

TEST_CASE("optimal Q") {
  const Instance inst = canonical_line3();
  const double tol = 1e-10;
  {
    const Instance flat = with_reward(inst, constant_reward(0.5));
    const ExactOracle oracle(flat.model, flat.graph);
    for (double v : oracle.exact_optimal_q(tol)) CHECK(std::abs(v - 1.0) <= tol);
  }
  const ExactOracle oracle(inst.model, inst.graph);
  const auto qstar = oracle.exact_optimal_q(tol);
  for (auto pi : {uniform_individual_policy(2), occupancy_logistic_policy(0.2, -1.5),
                  table_individual_policy({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}})}) {
    const auto q = aggregate_q(oracle, lifted_weights(oracle, pi));
    for (std::size_t x = 0; x < q.size(); ++x) CHECK(qstar[x] >= q[x] - 2 * tol);
  }
  CHECK(oracle.optimal_j(inst.initial, tol) >= qstar[oracle.xi().index(EmpiricalStateDist({2, 1, 1}),
                                                                      TeamActionDist(2, {2, 0, 1, 0, 1, 0}))] - tol);

  Instance myopic = inst;
  myopic.model.gamma = 1e-12;
  const ExactOracle shortsighted(myopic.model, myopic.graph);
  const auto q0 = shortsighted.exact_optimal_q(tol);
  CHECK(sup_diff(q0, shortsighted.global_reward()) <= 1e-10);
}

TEST_CASE("stationary law") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const auto& xi = oracle.xi();

  const auto stay_w = lifted_weights(oracle, table_individual_policy({{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}));
  const auto frozen = oracle.exact_stationary(stay_w, inst.initial);
  const std::size_t m0 = xi.mu_index(EmpiricalStateDist({2, 1, 1}));
  for (std::size_t x = 0; x < xi.size(); ++x)
    CHECK(std::abs(frozen[x] - (xi.mu_of(x) == m0 ? stay_w[x] : 0.0)) <= 1e-10);

  const IndividualPolicy pi = occupancy_logistic_policy(0.2, -1.5);
  const PolicyTable table(LiftedPolicy(pi, 3, 2, 4));
  const auto pi_w = oracle.policy_weights(table);
  const auto nu = oracle.exact_stationary(pi_w, inst.initial);
  CHECK(std::abs(total(nu) - 1.0) <= 1e-10);
  CHECK(*std::min_element(nu.begin(), nu.end()) >= 0.0);

  StationaryStream stream(inst.model, inst.graph, table, inst.initial, 200, 99);
  std::vector<double> freq(xi.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto t = stream.next();
    freq[xi.index(t.mu, t.h)] += 1.0 / n;
  }
  CHECK(tv(freq, nu) <= 0.03);
}

TEST_CASE("discounted visitation") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  const auto& xi = oracle.xi();
  const PolicyTable table(LiftedPolicy(occupancy_logistic_policy(-0.3, 0.8), 3, 2, 4));
  const auto pi_w = oracle.policy_weights(table);

  const auto rho0 = oracle.initial_weights(pi_w, inst.initial);
  CHECK(sup_diff(oracle.exact_visitation(pi_w, inst.initial, 1e-12), rho0) <= 1e-11);

  const auto sigma = oracle.exact_visitation(pi_w, inst.initial, inst.model.gamma);
  CHECK(std::abs(total(sigma) - 1.0) <= 1e-12);

  VisitationStream stream(inst.model, inst.graph, table, inst.initial, inst.model.gamma, 5);
  std::vector<double> freq(xi.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto [mu, h] = stream.next();
    freq[xi.index(mu, h)] += 1.0 / n;
  }
  CHECK(tv(freq, sigma) <= 0.03);
}

TEST_CASE("exact J") {
  const Instance inst = canonical_line3();
  const auto params = init_energy_params(3, 2, 16, 10.0, 2.0, 8);
  {
    const Instance flat = with_reward(inst, constant_reward(0.7));
    const ExactOracle oracle(flat.model, flat.graph);
    CHECK(exact_j(oracle, params, flat.initial, 1e-12) == doctest::Approx(1.4).epsilon(1e-11));
    for (const auto& g : exact_policy_grad(oracle, params, flat.initial)) CHECK(g.cwiseAbs().maxCoeff() <= 1e-10);
  }
  const ExactOracle oracle(inst.model, inst.graph);
  const double j = exact_j(oracle, params, inst.initial);
  CHECK(std::abs(j) <= 3 * inst.model.r_max / (1 - inst.model.gamma));
  CHECK(j <= oracle.optimal_j(inst.initial) + 1e-8);

  const PolicyTable table(EnergyPolicy(params, 2, 4));
  Rng rng(77);
  const double mc = monte_carlo_j(inst.model, inst.graph, table, inst.initial, 100000, rng);
  CHECK(std::abs(mc - j) <= 1e-2 * j);

  CHECK(oracle.exact_j(energy_weights(oracle, params), inst.initial) == doctest::Approx(j).epsilon(1e-12));
}

TEST_CASE("policy gradient against finite differences") {
  const Instance inst = canonical_line3();
  const ExactOracle oracle(inst.model, inst.graph);
  // Small perturbations of a width-4 net; a seed whose units stay off the
  // kinks for all candidate inputs keeps the central differences clean.
  auto params = init_energy_params(3, 2, 4, 10.0, 1.5, 41);
  const auto grads = exact_policy_grad(oracle, params, inst.initial);
  const double eps = 1e-5;
  double err = 0.0, norm = 0.0;
  for (StateIndex s = 0; s < 3; ++s) {
    const Matrix W = params.nets[s].weights();
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        Matrix wp = W, wm = W;
        wp(i, j) += eps;
        wm(i, j) -= eps;
        auto plus = params, minus = params;
        plus.nets[s] = params.nets[s].with_weights(wp);
        minus.nets[s] = params.nets[s].with_weights(wm);
        const double fd = (exact_j(oracle, plus, inst.initial, 1e-14) - exact_j(oracle, minus, inst.initial, 1e-14)) /
                          (2 * eps);
        err += (fd - grads[s](i, j)) * (fd - grads[s](i, j));
        norm += grads[s](i, j) * grads[s](i, j);
      }
  }
  CHECK(norm > 0.0);
  CHECK(std::sqrt(err) <= 1e-4 * std::sqrt(norm));

  for (StateIndex s = 0; s < 3; ++s) {
    const Matrix local = localized_policy_grad(oracle, params, inst.initial, s, inst.graph.diameter());
    CHECK((local - grads[s]).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("decay gap and truncation") {
  for (double gamma : {0.25, 0.5, 0.8}) {
    Instance inst = canonical_line3();
    inst.model.gamma = gamma;
    const ExactOracle oracle(inst.model, inst.graph);
    const double c = inst.model.r_max / (1.0 - gamma);
    if (gamma == 0.25) CHECK(c * std::pow(gamma, 1.5) == doctest::Approx(4.0 / 3.0 * 0.125));
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto params = init_energy_params(3, 2, 16, 10.0, 1.0 + seed, seed);
      const auto pi_w = energy_weights(oracle, params);
      const auto nu = oracle.exact_stationary(pi_w, inst.initial);
      for (StateIndex s = 0; s < 3; ++s) {
        const auto q = oracle.exact_team_q(pi_w, s, 1e-12);
        for (int k = 0; k <= 3; ++k) {
          const double bound = c * std::pow(gamma, (k + 1) / 2.0) + 2e-12;
          const double gap = oracle.decay_gap(q, s, k);
          CHECK(gap <= bound);
          if (k >= inst.graph.diameter()) CHECK(gap == 0.0);
          const auto uni = oracle.truncated_q(q, s, k, TruncationWeights::uniform);
          const auto cond = oracle.truncated_q(q, s, k, TruncationWeights::nu_conditional, &nu);
          for (std::size_t x = 0; x < q.size(); ++x) {
            CHECK(std::abs(uni.per_xi[x] - q[x]) <= bound);
            CHECK(std::abs(cond.per_xi[x] - q[x]) <= bound);
            CHECK(std::abs(uni.per_xi[x] - cond.per_xi[x]) <= 2 * bound);
            if (k >= inst.graph.diameter()) CHECK(uni.per_xi[x] == q[x]);
          }
        }
      }
    }
  }
}
