#include "mfac/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mfac/errors.hpp"
#include "mfac/observation.hpp"

namespace mfac {

double XiSpace::size_bound(std::size_t n_states, std::size_t n_actions, int n_agents) {
  const double n_mus = composition_count(n_agents, n_states);
  // |H^N(mu)| is largest when the agents are spread as evenly as possible.
  double max_h = 1.0;
  const int base = n_agents / static_cast<int>(n_states);
  const int extra = n_agents % static_cast<int>(n_states);
  for (std::size_t s = 0; s < n_states; ++s)
    max_h *= composition_count(base + (static_cast<int>(s) < extra ? 1 : 0), n_actions);
  return n_mus * max_h;
}

XiSpace::XiSpace(std::size_t n_states, std::size_t n_actions, int n_agents, double cap)
    : n_states_(n_states), n_actions_(n_actions), n_agents_(n_agents) {
  if (n_states < 1 || n_actions < 1 || n_agents < 1)
    throw std::invalid_argument("Xi needs at least one state, action and agent");
  const double bound = size_bound(n_states, n_actions, n_agents);
  if (bound > cap)
    throw CapExceeded("enumeration of Xi needs up to " + std::to_string(static_cast<long long>(bound)) +
                      " entries, above the cap of " + std::to_string(static_cast<long long>(cap)));
  for (int c = 0; c <= n_agents; ++c) candidates_.push_back(CandidateSet::build(c, n_actions));
  offsets_.push_back(0);
  for (auto& counts : compositions(n_agents, n_states)) {
    const std::size_t m = mus_.size();
    mu_lookup_.emplace(counts, m);
    EmpiricalStateDist mu(counts);
    std::vector<std::size_t> radix(n_states);
    std::size_t total = 1;
    for (std::size_t s = 0; s < n_states; ++s) {
      radix[s] = candidates_[static_cast<std::size_t>(counts[s])].size();
      total *= radix[s];
    }
    std::vector<std::size_t> digit(n_states, 0);
    for (std::size_t i = 0; i < total; ++i) {
      TeamActionDist h(n_states, n_actions);
      for (std::size_t s = 0; s < n_states; ++s)
        h.set_row(s, candidates_[static_cast<std::size_t>(counts[s])].items[digit[s]]);
      hs_.push_back(std::move(h));
      mu_of_.push_back(m);
      for (std::size_t s = 0; s < n_states; ++s) {
        if (++digit[s] < radix[s]) break;
        digit[s] = 0;
      }
    }
    offsets_.push_back(hs_.size());
    mus_.push_back(std::move(mu));
  }
}

std::size_t XiSpace::mu_index(const EmpiricalStateDist& mu) const {
  auto it = mu_lookup_.find(mu.counts());
  if (it == mu_lookup_.end()) throw std::out_of_range("state distribution is not in Xi");
  return it->second;
}

std::size_t XiSpace::index(const EmpiricalStateDist& mu, const TeamActionDist& h) const {
  const std::size_t m = mu_index(mu);
  if (!h.compatible_with(mu)) throw std::out_of_range("action distribution does not match mu");
  std::size_t local = 0, stride = 1;
  for (std::size_t s = 0; s < n_states_; ++s) {
    const auto& cands = candidates_[static_cast<std::size_t>(mu.count(s))];
    local += stride * cands.find(h.row_vector(s));
    stride *= cands.size();
  }
  return offsets_[m] + local;
}

ExactOracle::ExactOracle(ModelSpec model, StateGraph graph, double xi_cap)
    : model_(std::move(model)),
      graph_(std::move(graph)),
      xi_(graph_.size(), model_.n_actions(), model_.n_agents, xi_cap) {
  const std::size_t n_states = graph_.size();
  const std::size_t n_actions = model_.n_actions();
  rows_.resize(xi_.size());
  team_reward_.assign(n_states, std::vector<double>(xi_.size(), 0.0));
  global_reward_.assign(xi_.size(), 0.0);

  for (std::size_t m = 0; m < xi_.n_mus(); ++m) {
    const EmpiricalStateDist& mu = xi_.mu(m);
    std::vector<LocalMeanField> locals;
    for (StateIndex s = 0; s < n_states; ++s) locals.push_back(local_mean_field(graph_, mu, s));
    // kernels[s][a]; only populated for occupied states.
    std::vector<std::vector<std::vector<double>>> kernels(n_states);
    for (StateIndex s = 0; s < n_states; ++s) {
      if (mu.count(s) == 0) continue;
      for (std::size_t a = 0; a < n_actions; ++a) {
        auto pmf = model_.kernel(locals[s], a);
        validate_kernel_pmf(pmf, locals[s], n_states);
        kernels[s].push_back(std::move(pmf));
      }
    }
    for (std::size_t x = xi_.offset(m); x < xi_.offset(m + 1); ++x) {
      const TeamActionDist& h = xi_.h(x);
      // Convolve one agent at a time over destination count vectors.
      std::map<std::vector<int>, double> partial{{std::vector<int>(n_states, 0), 1.0}};
      for (StateIndex s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
          const int c = h.count(s, a);
          if (c == 0) continue;
          const auto& pmf = kernels[s][a];
          for (int i = 0; i < c; ++i) {
            std::map<std::vector<int>, double> next;
            for (const auto& [counts, p] : partial) {
              for (StateIndex t = 0; t < n_states; ++t) {
                if (pmf[t] == 0.0) continue;
                auto moved = counts;
                ++moved[t];
                next[moved] += p * pmf[t];
              }
            }
            partial = std::move(next);
          }
        }
      }
      auto& row = rows_[x];
      row.reserve(partial.size());
      for (const auto& [counts, p] : partial) row.emplace_back(xi_.mu_index(EmpiricalStateDist(counts)), p);
      std::sort(row.begin(), row.end());

      for (StateIndex s = 0; s < n_states; ++s) {
        const double r = team_stage_reward(model_, graph_, s, mu, h);
        team_reward_[s][x] = r;
        global_reward_[x] += r;
      }
    }
  }
}

std::size_t ExactOracle::transition_nonzeros() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

std::vector<double> ExactOracle::exact_team_kernel(const EmpiricalStateDist& mu,
                                                   const TeamActionDist& h) const {
  std::vector<double> out(xi_.n_mus(), 0.0);
  for (const auto& [m, p] : rows_[xi_.index(mu, h)]) out[m] = p;
  return out;
}

std::vector<double> ExactOracle::policy_weights(const PolicyTable& table) const {
  if (table.n_states() != graph_.size() || table.n_actions() != model_.n_actions() ||
      table.n_agents() != model_.n_agents)
    throw std::invalid_argument("policy does not match the oracle instance");
  std::vector<double> w(xi_.size());
  for (std::size_t x = 0; x < xi_.size(); ++x) w[x] = table.prob(xi_.mu(xi_.mu_of(x)), xi_.h(x));
  return w;
}

std::vector<double> ExactOracle::initial_weights(const std::vector<double>& pi_w,
                                                 const InitialDistribution& initial) const {
  std::vector<double> rho(xi_.size(), 0.0);
  for (std::size_t i = 0; i < initial.support.size(); ++i) {
    const std::size_t m = xi_.mu_index(initial.support[i]);
    for (std::size_t x = xi_.offset(m); x < xi_.offset(m + 1); ++x)
      rho[x] += initial.probs[i] * pi_w[x];
  }
  return rho;
}

std::vector<double> ExactOracle::successor_values(const std::vector<double>& pi_w,
                                                  const std::vector<double>& q) const {
  std::vector<double> v(xi_.n_mus(), 0.0);
  for (std::size_t m = 0; m < xi_.n_mus(); ++m)
    for (std::size_t x = xi_.offset(m); x < xi_.offset(m + 1); ++x) v[m] += pi_w[x] * q[x];
  return v;
}

std::vector<double> ExactOracle::bellman_apply(const std::vector<double>& pi_w,
                                               const std::vector<double>& q,
                                               const std::vector<double>& reward) const {
  if (q.size() != xi_.size() || pi_w.size() != xi_.size() || reward.size() != xi_.size())
    throw std::invalid_argument("table size does not match Xi");
  const auto v = successor_values(pi_w, q);
  std::vector<double> out(xi_.size());
  for (std::size_t x = 0; x < xi_.size(); ++x) {
    double expected = 0.0;
    for (const auto& [m, p] : rows_[x]) expected += p * v[m];
    out[x] = reward[x] + model_.gamma * expected;
  }
  return out;
}

std::vector<double> ExactOracle::bellman_apply(const std::vector<double>& pi_w,
                                               const std::vector<double>& q, StateIndex s) const {
  return bellman_apply(pi_w, q, team_reward_.at(s));
}

namespace {

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Iterates a gamma-contraction until the a-posteriori bound certifies tol.
template <class Step>
std::vector<double> fixed_point(std::vector<double> q, double gamma, double tol, Step step) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const double stop = tol * (1.0 - gamma) / gamma;
  for (int it = 0; it < 100000; ++it) {
    auto next = step(q);
    const double d = sup_diff(next, q);
    q = std::move(next);
    if (d <= stop || d == 0.0) return q;
  }
  // Below the stopping threshold only rounding noise remains.
  return q;
}

}  // namespace

std::vector<double> ExactOracle::evaluate_q(const std::vector<double>& pi_w,
                                            const std::vector<double>& reward, double tol) const {
  return fixed_point(std::vector<double>(xi_.size(), 0.0), model_.gamma, tol,
                     [&](const std::vector<double>& q) { return bellman_apply(pi_w, q, reward); });
}

std::vector<double> ExactOracle::exact_team_q(const std::vector<double>& pi_w, StateIndex s,
                                              double tol) const {
  return evaluate_q(pi_w, team_reward_.at(s), tol);
}

std::vector<double> ExactOracle::exact_team_value(const std::vector<double>& pi_w,
                                                  double tol) const {
  // Expected one-step reward and transition law under Pi, on mu alone.
  const std::size_t n = xi_.n_mus();
  std::vector<double> r(n, 0.0);
  std::vector<std::map<std::size_t, double>> k(n);
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t x = xi_.offset(m); x < xi_.offset(m + 1); ++x) {
      if (pi_w[x] == 0.0) continue;
      r[m] += pi_w[x] * global_reward_[x];
      for (const auto& [m2, p] : rows_[x]) k[m][m2] += pi_w[x] * p;
    }
  }
  return fixed_point(std::vector<double>(n, 0.0), model_.gamma, tol,
                     [&](const std::vector<double>& v) {
                       std::vector<double> out(n);
                       for (std::size_t m = 0; m < n; ++m) {
                         double e = 0.0;
                         for (const auto& [m2, p] : k[m]) e += p * v[m2];
                         out[m] = r[m] + model_.gamma * e;
                       }
                       return out;
                     });
}

std::vector<double> ExactOracle::exact_optimal_q(double tol) const {
  return fixed_point(std::vector<double>(xi_.size(), 0.0), model_.gamma, tol,
                     [&](const std::vector<double>& q) {
                       std::vector<double> best(xi_.n_mus(), -std::numeric_limits<double>::infinity());
                       for (std::size_t x = 0; x < xi_.size(); ++x)
                         best[xi_.mu_of(x)] = std::max(best[xi_.mu_of(x)], q[x]);
                       std::vector<double> out(xi_.size());
                       for (std::size_t x = 0; x < xi_.size(); ++x) {
                         double e = 0.0;
                         for (const auto& [m, p] : rows_[x]) e += p * best[m];
                         out[x] = global_reward_[x] + model_.gamma * e;
                       }
                       return out;
                     });
}

std::vector<double> ExactOracle::exact_stationary(const std::vector<double>& pi_w,
                                                  const InitialDistribution& initial, double tol,
                                                  std::size_t max_iter) const {
  std::vector<double> nu = initial_weights(pi_w, initial);
  std::vector<double> mass(xi_.n_mus());
  std::vector<double> stepped(xi_.size());
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t x = 0; x < xi_.size(); ++x) {
      if (nu[x] == 0.0) continue;
      for (const auto& [m, p] : rows_[x]) mass[m] += nu[x] * p;
    }
    double diff = 0.0;
    for (std::size_t x = 0; x < xi_.size(); ++x) {
      stepped[x] = mass[xi_.mu_of(x)] * pi_w[x];
      diff += std::abs(stepped[x] - nu[x]);
    }
    if (diff <= tol) {
      double total = 0.0;
      for (double v : nu) total += v;
      for (double& v : nu) v /= total;
      return nu;
    }
    for (std::size_t x = 0; x < xi_.size(); ++x) nu[x] = 0.5 * (nu[x] + stepped[x]);
  }
  throw NonConvergence("stationary distribution did not converge within " +
                       std::to_string(max_iter) + " iterations");
}

std::vector<double> ExactOracle::exact_visitation(const std::vector<double>& pi_w,
                                                  const InitialDistribution& initial, double gamma,
                                                  double tol) const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  std::vector<double> rho = initial_weights(pi_w, initial);
  std::vector<double> sigma(xi_.size(), 0.0);
  std::vector<double> mass(xi_.n_mus());
  double weight = 1.0;  // gamma^t
  while (2.0 * weight > tol) {
    for (std::size_t x = 0; x < xi_.size(); ++x) sigma[x] += (1.0 - gamma) * weight * rho[x];
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t x = 0; x < xi_.size(); ++x) {
      if (rho[x] == 0.0) continue;
      for (const auto& [m, p] : rows_[x]) mass[m] += rho[x] * p;
    }
    for (std::size_t x = 0; x < xi_.size(); ++x) rho[x] = mass[xi_.mu_of(x)] * pi_w[x];
    weight *= gamma;
  }
  for (std::size_t x = 0; x < xi_.size(); ++x) sigma[x] += weight * rho[x];
  return sigma;
}

double ExactOracle::exact_j(const std::vector<double>& pi_w, const InitialDistribution& initial,
                            double tol) const {
  const auto q = evaluate_q(pi_w, global_reward_, tol);
  const auto rho = initial_weights(pi_w, initial);
  double j = 0.0;
  for (std::size_t x = 0; x < xi_.size(); ++x) j += rho[x] * q[x];
  return j;
}

double ExactOracle::optimal_j(const InitialDistribution& initial, double tol) const {
  const auto q = exact_optimal_q(tol);
  double j = 0.0;
  for (std::size_t i = 0; i < initial.support.size(); ++i) {
    const std::size_t m = xi_.mu_index(initial.support[i]);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t x = xi_.offset(m); x < xi_.offset(m + 1); ++x) best = std::max(best, q[x]);
    j += initial.probs[i] * best;
  }
  return j;
}

std::vector<std::vector<int>> ExactOracle::window_keys(StateIndex s, int k) const {
  std::vector<std::vector<int>> keys;
  keys.reserve(xi_.size());
  for (std::size_t x = 0; x < xi_.size(); ++x)
    keys.push_back(observe(graph_, xi_.mu(xi_.mu_of(x)), xi_.h(x), s, k).key());
  return keys;
}

double ExactOracle::decay_gap(const std::vector<double>& q_s, StateIndex s, int k) const {
  if (q_s.size() != xi_.size()) throw std::invalid_argument("table size does not match Xi");
  const auto keys = window_keys(s, k);
  std::map<std::vector<int>, std::pair<double, double>> range;
  for (std::size_t x = 0; x < xi_.size(); ++x) {
    auto [it, fresh] = range.try_emplace(keys[x], q_s[x], q_s[x]);
    if (!fresh) {
      it->second.first = std::min(it->second.first, q_s[x]);
      it->second.second = std::max(it->second.second, q_s[x]);
    }
  }
  double gap = 0.0;
  for (const auto& [key, r] : range) gap = std::max(gap, r.second - r.first);
  return gap;
}

TruncatedQ ExactOracle::truncated_q(const std::vector<double>& q_s, StateIndex s, int k,
                                    TruncationWeights weights,
                                    const std::vector<double>* nu) const {
  if (q_s.size() != xi_.size()) throw std::invalid_argument("table size does not match Xi");
  if (weights == TruncationWeights::nu_conditional && (nu == nullptr || nu->size() != xi_.size()))
    throw std::invalid_argument("nu-conditional weights need nu over Xi");
  const auto keys = window_keys(s, k);
  struct Acc {
    double sum = 0.0;
    double n = 0.0;
    double nu_sum = 0.0;
    double nu_mass = 0.0;
  };
  std::map<std::vector<int>, Acc> acc;
  for (std::size_t x = 0; x < xi_.size(); ++x) {
    Acc& a = acc[keys[x]];
    a.sum += q_s[x];
    a.n += 1.0;
    if (nu != nullptr) {
      a.nu_sum += (*nu)[x] * q_s[x];
      a.nu_mass += (*nu)[x];
    }
  }
  TruncatedQ out;
  for (const auto& [key, a] : acc) {
    if (a.n == 0.0) throw std::logic_error("window with no consistent completion");
    const bool use_nu = weights == TruncationWeights::nu_conditional && a.nu_mass > 0.0;
    out.by_window[key] = use_nu ? a.nu_sum / a.nu_mass : a.sum / a.n;
  }
  out.per_xi.resize(xi_.size());
  for (std::size_t x = 0; x < xi_.size(); ++x) out.per_xi[x] = out.by_window.at(keys[x]);
  return out;
}

double exact_j(const ExactOracle& oracle, const EnergyPolicyParams& params,
               const InitialDistribution& initial, double tol) {
  const PolicyTable table(EnergyPolicy(params, oracle.model().n_actions(), oracle.model().n_agents));
  return oracle.exact_j(oracle.policy_weights(table), initial, tol);
}

std::vector<Matrix> centered_features(const ExactOracle& oracle, const EnergyPolicyParams& params,
                                      StateIndex s) {
  const XiSpace& xi = oracle.xi();
  const int n = xi.n_agents();
  const TwoLayerNet& net = params.nets.at(s);
  // Features and their policy means for every count at s.
  std::vector<std::vector<Matrix>> feats(static_cast<std::size_t>(n) + 1);
  std::vector<Matrix> means(static_cast<std::size_t>(n) + 1);
  for (int c = 0; c <= n; ++c) {
    const auto& cands = xi.candidates(c);
    const auto pmf = energy_policy_pmf(params, s, c, n, xi.n_actions());
    Matrix mean = Matrix::Zero(net.width(), net.in_dim());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      feats[static_cast<std::size_t>(c)].push_back(
          net.feature_map(encode_state_input(c, cands.items[i], n)));
      mean += pmf[i] * feats[static_cast<std::size_t>(c)].back();
    }
    means[static_cast<std::size_t>(c)] = std::move(mean);
  }
  std::vector<Matrix> out;
  out.reserve(xi.size());
  for (std::size_t x = 0; x < xi.size(); ++x) {
    const int c = xi.mu(xi.mu_of(x)).count(s);
    const std::size_t i = xi.candidates(c).find(xi.h(x).row_vector(s));
    out.push_back(feats[static_cast<std::size_t>(c)][i] - means[static_cast<std::size_t>(c)]);
  }
  return out;
}

namespace {

Matrix weighted_feature_sum(const std::vector<Matrix>& phi, const std::vector<double>& sigma,
                            const std::vector<double>& q, double scale) {
  Matrix g = Matrix::Zero(phi.front().rows(), phi.front().cols());
  for (std::size_t x = 0; x < phi.size(); ++x) {
    const double w = sigma[x] * q[x];
    if (w != 0.0) g += w * phi[x];
  }
  return scale * g;
}

}  // namespace

std::vector<Matrix> exact_policy_grad(const ExactOracle& oracle, const EnergyPolicyParams& params,
                                      const InitialDistribution& initial, double tol) {
  const ModelSpec& model = oracle.model();
  const PolicyTable table(EnergyPolicy(params, model.n_actions(), model.n_agents));
  const auto pi_w = oracle.policy_weights(table);
  const auto q = oracle.evaluate_q(pi_w, oracle.global_reward(), tol);
  const auto sigma = oracle.exact_visitation(pi_w, initial, model.gamma, tol);
  const double scale = params.tau / (1.0 - model.gamma);
  std::vector<Matrix> grads;
  for (StateIndex s = 0; s < oracle.graph().size(); ++s)
    grads.push_back(weighted_feature_sum(centered_features(oracle, params, s), sigma, q, scale));
  return grads;
}

Matrix localized_policy_grad(const ExactOracle& oracle, const EnergyPolicyParams& params,
                             const InitialDistribution& initial, StateIndex s, int k,
                             TruncationWeights weights, double tol) {
  const ModelSpec& model = oracle.model();
  const PolicyTable table(EnergyPolicy(params, model.n_actions(), model.n_agents));
  const auto pi_w = oracle.policy_weights(table);
  const auto sigma = oracle.exact_visitation(pi_w, initial, model.gamma, tol);
  std::vector<double> nu;
  if (weights == TruncationWeights::nu_conditional) nu = oracle.exact_stationary(pi_w, initial);
  std::vector<double> q_hat(oracle.xi().size(), 0.0);
  for (StateIndex y : oracle.graph().hop_members(s, k)) {
    const auto q_y = oracle.exact_team_q(pi_w, y, tol);
    const auto t = oracle.truncated_q(q_y, y, k, weights, nu.empty() ? nullptr : &nu);
    for (std::size_t x = 0; x < q_hat.size(); ++x) q_hat[x] += t.per_xi[x];
  }
  return weighted_feature_sum(centered_features(oracle, params, s), sigma, q_hat,
                              params.tau / (1.0 - model.gamma));
}

}  // namespace mfac
