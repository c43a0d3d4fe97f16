#include "mfac/ltde.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "mfac/oracle.hpp"

namespace mfac {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kCriticInitTag = 1;
constexpr std::uint64_t kCriticStreamTag = 2;
constexpr std::uint64_t kVisitTag = 3;
constexpr std::uint64_t kMonteCarloTag = 4;

}  // namespace

std::vector<double> team_rewards(const ModelSpec& model, const StateGraph& graph,
                                 const EmpiricalStateDist& mu, const TeamActionDist& h) {
  std::vector<double> r(graph.size());
  for (StateIndex s = 0; s < graph.size(); ++s) r[s] = team_stage_reward(model, graph, s, mu, h);
  return r;
}

StationaryStream::StationaryStream(const ModelSpec& model, const StateGraph& graph,
                                   const PolicyTable& policy, const InitialDistribution& initial,
                                   int burn_in, std::uint64_t seed, int thinning)
    : model_(model), graph_(graph), policy_(policy), thinning_(thinning), rng_(seed) {
  if (burn_in < 0) throw std::invalid_argument("burn-in must be non-negative");
  if (thinning < 1) throw std::invalid_argument("thinning must be at least 1");
  mu_ = initial.sample(rng_);
  h_ = policy_.sample(mu_, rng_);
  for (int i = 0; i < burn_in; ++i) advance();
}

void StationaryStream::advance() {
  mu_ = team_sample_step(model_, graph_, mu_, h_, rng_);
  h_ = policy_.sample(mu_, rng_);
}

TransitionTuple StationaryStream::next() {
  TransitionTuple t;
  t.mu = mu_;
  t.h = h_;
  t.rewards = team_rewards(model_, graph_, mu_, h_);
  advance();
  t.mu_next = mu_;
  t.h_next = h_;
  for (int i = 1; i < thinning_; ++i) advance();
  return t;
}

TransitionTuple sample_stationary_tuple(const ModelSpec& model, const StateGraph& graph,
                                        const PolicyTable& policy,
                                        const InitialDistribution& initial, int burn_in, Rng& rng) {
  StationaryStream stream(model, graph, policy, initial, burn_in, rng());
  return stream.next();
}

VisitationStream::VisitationStream(const ModelSpec& model, const StateGraph& graph,
                                   const PolicyTable& policy, const InitialDistribution& initial,
                                   double gamma, std::uint64_t seed, double warmup_restarts)
    : model_(model), graph_(graph), policy_(policy), initial_(initial), gamma_(gamma), rng_(seed) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  mu_ = initial_.sample(rng_);
  h_ = policy_.sample(mu_, rng_);
  const auto warmup = static_cast<long long>(std::ceil(warmup_restarts / (1.0 - gamma)));
  for (long long i = 0; i < warmup; ++i) advance();
}

void VisitationStream::advance() {
  if (sample_bernoulli(gamma_, rng_))
    mu_ = team_sample_step(model_, graph_, mu_, h_, rng_);
  else
    mu_ = initial_.sample(rng_);
  h_ = policy_.sample(mu_, rng_);
}

std::pair<EmpiricalStateDist, TeamActionDist> VisitationStream::next() {
  std::pair<EmpiricalStateDist, TeamActionDist> out{mu_, h_};
  advance();
  return out;
}

std::pair<EmpiricalStateDist, TeamActionDist> sample_visitation_pair(
    const ModelSpec& model, const StateGraph& graph, const PolicyTable& policy,
    const InitialDistribution& initial, double gamma, Rng& rng, double warmup_restarts) {
  VisitationStream stream(model, graph, policy, initial, gamma, rng(), warmup_restarts);
  return stream.next();
}

double CriticConfig::resolved_step_size(double gamma) const {
  if (step_size) return *step_size;
  return std::min((1.0 - gamma) / 8.0, 1.0 / std::sqrt(static_cast<double>(iterations)));
}

TwoLayerNet CriticState::averaged(StateIndex s) const {
  const auto n = steps.at(s);
  if (n == 0) return nets.at(s).with_weights(nets.at(s).init_weights());
  return nets.at(s).with_weights(weight_sums.at(s) / static_cast<double>(n));
}

double CriticState::mean_sq_residual(StateIndex s) const {
  const auto n = steps.at(s);
  return n == 0 ? 0.0 : sq_residual_sum.at(s) / static_cast<double>(n);
}

double CriticState::evaluate(StateIndex s, const LocalObservation& obs) const {
  return averaged(s).forward(encode(obs));
}

CriticState init_critic(const ModelSpec& model, const StateGraph& graph, const CriticConfig& cfg,
                        std::uint64_t seed) {
  if (cfg.width < 1 || cfg.iterations < 1 || cfg.k < 0 || !(cfg.radius >= 0.0))
    throw std::invalid_argument("invalid critic hyperparameters");
  CriticState c;
  c.k = cfg.k;
  c.step_size = cfg.resolved_step_size(model.gamma);
  if (!(c.step_size > 0.0)) throw std::invalid_argument("critic step size must be positive");
  for (StateIndex s = 0; s < graph.size(); ++s) {
    const auto dim = encoded_dim(graph.hop_members(s, cfg.k).size(), model.n_actions());
    c.nets.push_back(TwoLayerNet::initialize(cfg.width, static_cast<int>(dim), cfg.radius,
                                             derive_seed(seed, kCriticInitTag, s)));
    c.weight_sums.push_back(Matrix::Zero(cfg.width, static_cast<Eigen::Index>(dim)));
    c.sq_residual_sum.push_back(0.0);
    c.steps.push_back(0);
  }
  return c;
}

double td_residual(const TwoLayerNet& net, const LocalObservation& obs, double reward,
                   const LocalObservation& next_obs, double gamma) {
  return net.forward(encode(obs)) - reward - gamma * net.forward(encode(next_obs));
}

double critic_step(CriticState& critic, const StateGraph& graph, const TransitionTuple& tuple,
                   StateIndex s, double gamma) {
  const LocalObservation obs = observe(graph, tuple.mu, tuple.h, s, critic.k);
  const LocalObservation next_obs = observe(graph, tuple.mu_next, tuple.h_next, s, critic.k);
  TwoLayerNet& net = critic.nets.at(s);
  const auto x = encode(obs);
  const double delta = net.forward(x) - tuple.rewards.at(s) -
                       gamma * net.forward(encode(next_obs));
  net.set_weights_projected(net.weights() - (critic.step_size * delta) * net.feature_map(x));
  critic.weight_sums[s] += net.weights();
  critic.sq_residual_sum[s] += delta * delta;
  ++critic.steps[s];
  return delta;
}

CriticState critic_train(const ModelSpec& model, const StateGraph& graph,
                         const PolicyTable& policy, const InitialDistribution& initial,
                         const CriticConfig& cfg, std::uint64_t seed) {
  CriticState critic = init_critic(model, graph, cfg, seed);
  StationaryStream stream(model, graph, policy, initial, cfg.burn_in,
                          derive_seed(seed, kCriticStreamTag), cfg.thinning);
  for (int t = 0; t + 1 < cfg.iterations; ++t) {
    const TransitionTuple tuple = stream.next();
    for (StateIndex s = 0; s < graph.size(); ++s) critic_step(critic, graph, tuple, s, model.gamma);
  }
  return critic;
}

LocalCritic critic_function(const CriticState& critic) {
  auto averaged = std::make_shared<std::vector<TwoLayerNet>>();
  for (StateIndex s = 0; s < critic.nets.size(); ++s) averaged->push_back(critic.averaged(s));
  return [averaged](StateIndex y, const LocalObservation& obs) {
    return averaged->at(y).forward(encode(obs));
  };
}

Matrix ghat_weighted(const std::vector<std::pair<EmpiricalStateDist, TeamActionDist>>& batch,
                     const std::vector<double>& weights, const LocalCritic& critic,
                     const EnergyPolicyParams& params, const StateGraph& graph, StateIndex s,
                     int k, double gamma, double cap) {
  if (batch.empty()) throw std::invalid_argument("gradient batch is empty");
  if (weights.size() != batch.size()) throw std::invalid_argument("one weight per sample is required");
  const TwoLayerNet& net = params.nets.at(s);
  const auto& members = graph.hop_members(s, k);
  Matrix g = Matrix::Zero(net.width(), net.in_dim());
  for (std::size_t l = 0; l < batch.size(); ++l) {
    if (weights[l] == 0.0) continue;
    const auto& [mu, h] = batch[l];
    if (mu.size() != graph.size() || !h.compatible_with(mu))
      throw std::invalid_argument("batch element does not match the model");
    double q = 0.0;
    for (StateIndex y : members) q += critic(y, observe(graph, mu, h, y, k));
    // Phi reads only mu(s) and h(s).
    const LocalObservation own = observe(graph, mu, h, s, 0);
    const int count = own.mu_counts[0];
    const auto pmf = energy_policy_pmf(params, s, count, own.n_agents, h.n_actions(), cap);
    const CandidateSet cands = CandidateSet::build(count, h.n_actions());
    g += (weights[l] * q) * centered_feature(net, count, own.h_counts[0], own.n_agents, pmf, cands);
  }
  return (params.tau / (1.0 - gamma)) * g;
}

Matrix ghat_estimate(const std::vector<std::pair<EmpiricalStateDist, TeamActionDist>>& batch,
                     const LocalCritic& critic, const EnergyPolicyParams& params,
                     const StateGraph& graph, StateIndex s, int k, double gamma, double cap) {
  const std::vector<double> w(batch.size(), 1.0 / static_cast<double>(batch.size()));
  return ghat_weighted(batch, w, critic, params, graph, s, k, gamma, cap);
}

double ActorConfig::resolved_step_size() const {
  if (step_size) return *step_size;
  return 1.0 / std::sqrt(static_cast<double>(iterations));
}

double monte_carlo_j(const ModelSpec& model, const StateGraph& graph, const PolicyTable& policy,
                     const InitialDistribution& initial, int rollouts, Rng& rng) {
  const int horizon = static_cast<int>(std::ceil(std::log(1e-8) / std::log(model.gamma)));
  double total = 0.0;
  for (int r = 0; r < rollouts; ++r) {
    EmpiricalStateDist mu = initial.sample(rng);
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const TeamActionDist h = policy.sample(mu, rng);
      total += discount * global_stage_reward(model, graph, mu, h);
      mu = team_sample_step(model, graph, mu, h, rng);
      discount *= model.gamma;
    }
  }
  return total / rollouts;
}

ActorResult actor_train(const ModelSpec& model, const StateGraph& graph,
                        const InitialDistribution& initial, const ActorConfig& cfg,
                        std::uint64_t seed, const ExactOracle* oracle,
                        const std::function<void(const ActorIterate&)>& on_iterate) {
  if (cfg.iterations < 0 || cfg.batch < 1 || cfg.k < 0 || cfg.mc_every < 1)
    throw std::invalid_argument("invalid actor hyperparameters");
  const double eta = cfg.resolved_step_size();
  CriticConfig critic_cfg = cfg.critic;
  critic_cfg.k = cfg.k;

  ActorResult result;
  EnergyPolicyParams theta = init_energy_params(graph.size(), model.n_actions(), cfg.width,
                                                cfg.radius, cfg.tau, seed);
  result.initial = theta;

  for (int t = 0; t <= cfg.iterations; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const EnergyPolicy policy(theta, model.n_actions(), model.n_agents, cfg.candidate_cap);
    const PolicyTable table(policy);
    ActorIterate entry;
    entry.iteration = t;
    if (oracle != nullptr) {
      entry.j = oracle->exact_j(oracle->policy_weights(table), initial);
    } else if (t % cfg.mc_every == 0 || t == cfg.iterations) {
      Rng mc(derive_seed(seed, kMonteCarloTag, static_cast<std::uint64_t>(t)));
      entry.j = monte_carlo_j(model, graph, table, initial, cfg.mc_rollouts, mc);
    }
    if (entry.j && (!result.best_j || *entry.j > *result.best_j)) {
      result.best_j = entry.j;
      result.best_iteration = t;
      result.best = theta;
    }
    if (t < cfg.iterations) {
      const std::uint64_t iter_seed = derive_seed(seed, static_cast<std::uint64_t>(t) + 1);
      const CriticState critic =
          critic_train(model, graph, table, initial, critic_cfg, derive_seed(iter_seed, 0));
      for (StateIndex s = 0; s < graph.size(); ++s)
        entry.critic_loss.push_back(critic.mean_sq_residual(s));

      VisitationStream visits(model, graph, table, initial, model.gamma,
                              derive_seed(iter_seed, kVisitTag), cfg.warmup_restarts);
      std::vector<std::pair<EmpiricalStateDist, TeamActionDist>> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch));
      for (int l = 0; l < cfg.batch; ++l) batch.push_back(visits.next());

      const LocalCritic q = critic_function(critic);
      EnergyPolicyParams next = theta;
      for (StateIndex s = 0; s < graph.size(); ++s) {
        const Matrix g =
            ghat_estimate(batch, q, theta, graph, s, cfg.k, model.gamma, cfg.candidate_cap);
        next.nets[s].set_weights_projected(theta.nets[s].weights() + eta * g);
      }
      theta = std::move(next);
    }
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_iterate) on_iterate(entry);
    result.log.push_back(std::move(entry));
  }
  result.final_params = theta;
  if (!result.best_j) result.best = theta;
  return result;
}

}  // namespace mfac
