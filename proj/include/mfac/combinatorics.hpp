#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace mfac {

/// C(n, k) as a double; exact while the result fits in 53 bits.
double binomial(int n, int k);

/// Number of length-`parts` non-negative integer vectors summing to `total`
/// (stars and bars): C(total + parts - 1, parts - 1).
double composition_count(int total, std::size_t parts);

/// All such vectors in colexicographic order (last coordinate most
/// significant, ascending).
std::vector<std::vector<int>> compositions(int total, std::size_t parts);

/// Multinomial probability of `counts` under per-category probabilities.
/// Categories with zero count contribute a factor of 1 even when p = 0.
double multinomial_pmf(std::span<const int> counts, std::span<const double> probs);

/// An enumerated candidate list with reverse lookup.
struct CandidateSet {
  std::vector<std::vector<int>> items;
  std::map<std::vector<int>, std::size_t> index;

  static CandidateSet build(int total, std::size_t parts);
  std::size_t size() const { return items.size(); }
  /// Throws std::out_of_range for vectors that are not in the set.
  std::size_t find(const std::vector<int>& item) const;
};

}  // namespace mfac
