#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace mfac {

/// Position of a state in the graph's canonical ordering.
using StateIndex = std::size_t;

/// A k-hop neighborhood (or its complement) of a center state. Members are
/// listed in the canonical state order so windows compare element-wise.
struct Window {
  StateIndex center = 0;
  int radius = 0;
  std::vector<StateIndex> members;

  bool contains(StateIndex s) const;
  std::size_t size() const { return members.size(); }
};

/// Undirected, unweighted graph over a finite state set.
///
/// All-pairs hop distances are computed once at construction by breadth-first
/// search, and every k-hop member list up to each state's eccentricity is
/// cached. The object is immutable afterwards and safe to share across
/// threads.
class StateGraph {
 public:
  /// Throws std::invalid_argument on duplicate ids, unknown edge endpoints,
  /// self-loops, or duplicate edges (either orientation).
  StateGraph(std::vector<int> ids, const std::vector<std::pair<int, int>>& edges);

  std::size_t size() const { return ids_.size(); }
  const std::vector<int>& ids() const { return ids_; }
  StateIndex index_of(int id) const;

  /// Edges as index pairs (first < second), in insertion order.
  const std::vector<std::pair<StateIndex, StateIndex>>& edges() const { return edges_; }

  /// Adjacent states, excluding s itself, canonical order.
  const std::vector<StateIndex>& adjacent(StateIndex s) const;

  /// Hop distance, or -1 when b is unreachable from a.
  int distance(StateIndex a, StateIndex b) const;

  /// Largest finite hop distance over all pairs.
  int diameter() const { return diameter_; }

  /// Members of N^k_s; k = 0 gives {s}. Returned by reference from the cache.
  const std::vector<StateIndex>& hop_members(StateIndex s, int k) const;

  Window k_hop(StateIndex s, int k) const;
  Window complement_k_hop(StateIndex s, int k) const;

 private:
  void check_state(StateIndex s) const;

  std::vector<int> ids_;
  std::vector<std::pair<StateIndex, StateIndex>> edges_;
  std::vector<std::vector<StateIndex>> adjacency_;
  std::vector<int> distance_;  // row-major |S| x |S|
  std::vector<std::vector<std::vector<StateIndex>>> hop_cache_;  // [s][k]
  int diameter_ = 0;
};

/// Path graph 0 - 1 - ... - (n-1) with ids 0..n-1.
StateGraph line_graph(int n);

/// Entries of a per-state table at the window's members, in window order.
/// No renormalization is applied.
template <class T>
std::vector<T> restrict(std::span<const T> values, const Window& window) {
  std::vector<T> out;
  out.reserve(window.members.size());
  for (StateIndex s : window.members) out.push_back(values[s]);
  return out;
}

}  // namespace mfac
