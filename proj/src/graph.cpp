#include "mfac/graph.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace mfac {

bool Window::contains(StateIndex s) const {
  return std::binary_search(members.begin(), members.end(), s);
}

StateGraph::StateGraph(std::vector<int> ids, const std::vector<std::pair<int, int>>& edges)
    : ids_(std::move(ids)) {
  if (ids_.empty()) throw std::invalid_argument("state graph needs at least one state");
  std::map<int, StateIndex> lookup;
  for (StateIndex i = 0; i < ids_.size(); ++i) {
    if (!lookup.emplace(ids_[i], i).second)
      throw std::invalid_argument("duplicate state id " + std::to_string(ids_[i]));
  }

  const std::size_t n = ids_.size();
  adjacency_.resize(n);
  std::set<std::pair<StateIndex, StateIndex>> seen;
  for (auto [a, b] : edges) {
    auto ia = lookup.find(a);
    auto ib = lookup.find(b);
    if (ia == lookup.end() || ib == lookup.end())
      throw std::invalid_argument("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                  ") references an unknown state");
    if (a == b) throw std::invalid_argument("self-loop edge on state " + std::to_string(a));
    auto key = std::minmax(ia->second, ib->second);
    if (!seen.insert(key).second)
      throw std::invalid_argument("duplicate edge (" + std::to_string(a) + ", " +
                                  std::to_string(b) + ")");
    edges_.push_back(key);
    adjacency_[key.first].push_back(key.second);
    adjacency_[key.second].push_back(key.first);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());

  distance_.assign(n * n, -1);
  hop_cache_.resize(n);
  for (StateIndex src = 0; src < n; ++src) {
    int* row = &distance_[src * n];
    row[src] = 0;
    std::deque<StateIndex> queue{src};
    int eccentricity = 0;
    while (!queue.empty()) {
      StateIndex u = queue.front();
      queue.pop_front();
      for (StateIndex v : adjacency_[u]) {
        if (row[v] < 0) {
          row[v] = row[u] + 1;
          eccentricity = std::max(eccentricity, row[v]);
          queue.push_back(v);
        }
      }
    }
    diameter_ = std::max(diameter_, eccentricity);
    auto& cache = hop_cache_[src];
    cache.resize(static_cast<std::size_t>(eccentricity) + 1);
    for (int k = 0; k <= eccentricity; ++k) {
      for (StateIndex t = 0; t < n; ++t)
        if (row[t] >= 0 && row[t] <= k) cache[k].push_back(t);
    }
  }
}

StateIndex StateGraph::index_of(int id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) throw std::out_of_range("unknown state id " + std::to_string(id));
  return static_cast<StateIndex>(it - ids_.begin());
}

void StateGraph::check_state(StateIndex s) const {
  if (s >= ids_.size()) throw std::out_of_range("unknown state index " + std::to_string(s));
}

const std::vector<StateIndex>& StateGraph::adjacent(StateIndex s) const {
  check_state(s);
  return adjacency_[s];
}

int StateGraph::distance(StateIndex a, StateIndex b) const {
  check_state(a);
  check_state(b);
  return distance_[a * ids_.size() + b];
}

const std::vector<StateIndex>& StateGraph::hop_members(StateIndex s, int k) const {
  check_state(s);
  if (k < 0) throw std::invalid_argument("hop radius must be non-negative");
  const auto& cache = hop_cache_[s];
  return cache[std::min<std::size_t>(static_cast<std::size_t>(k), cache.size() - 1)];
}

Window StateGraph::k_hop(StateIndex s, int k) const {
  return Window{s, k, hop_members(s, k)};
}

Window StateGraph::complement_k_hop(StateIndex s, int k) const {
  const auto& inside = hop_members(s, k);
  Window w{s, k, {}};
  for (StateIndex t = 0; t < ids_.size(); ++t)
    if (!std::binary_search(inside.begin(), inside.end(), t)) w.members.push_back(t);
  return w;
}

StateGraph line_graph(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    ids[static_cast<std::size_t>(i)] = i;
    if (i > 0) edges.emplace_back(i - 1, i);
  }
  return StateGraph(std::move(ids), edges);
}

}  // namespace mfac
