#include "mfac/combinatorics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfac {

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return std::round(result);
}

double composition_count(int total, std::size_t parts) {
  if (parts == 0) return total == 0 ? 1.0 : 0.0;
  return binomial(total + static_cast<int>(parts) - 1, static_cast<int>(parts) - 1);
}

namespace {

void fill(int remaining, std::size_t position, std::vector<int>& current,
          std::vector<std::vector<int>>& out) {
  // Walk from the most significant (last) coordinate so output is colex-sorted.
  if (position == 0) {
    current[0] = remaining;
    out.push_back(current);
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    current[position] = v;
    fill(remaining - v, position - 1, current, out);
  }
}

}  // namespace

std::vector<std::vector<int>> compositions(int total, std::size_t parts) {
  if (total < 0) throw std::invalid_argument("composition total must be non-negative");
  std::vector<std::vector<int>> out;
  if (parts == 0) {
    if (total == 0) out.emplace_back();
    return out;
  }
  std::vector<int> current(parts, 0);
  fill(total, parts - 1, current, out);
  return out;
}

double multinomial_pmf(std::span<const int> counts, std::span<const double> probs) {
  if (counts.size() != probs.size())
    throw std::invalid_argument("multinomial_pmf: counts and probs differ in length");
  int n = 0;
  double coefficient = 1.0;
  double power = 1.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw std::invalid_argument("multinomial_pmf: negative count");
    n += counts[i];
    coefficient *= binomial(n, counts[i]);
    if (counts[i] > 0) power *= std::pow(probs[i], counts[i]);
  }
  return coefficient * power;
}

CandidateSet CandidateSet::build(int total, std::size_t parts) {
  CandidateSet set;
  set.items = compositions(total, parts);
  for (std::size_t i = 0; i < set.items.size(); ++i) set.index.emplace(set.items[i], i);
  return set;
}

std::size_t CandidateSet::find(const std::vector<int>& item) const {
  auto it = index.find(item);
  if (it == index.end()) throw std::out_of_range("count vector is not a candidate");
  return it->second;
}

}  // namespace mfac
