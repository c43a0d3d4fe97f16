#pragma once

#include <string>
#include <vector>

#include "mfac/config.hpp"

namespace mfac {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  Json measured = Json::object();
  double seconds = 0.0;
  double limit_seconds = 0.0;
  bool runtime_exceeded = false;
};

inline constexpr int kCriterionCount = 12;

std::string criterion_name(int id);
double criterion_time_limit(int id);

/// Runs one acceptance criterion against the configured instance, using the
/// settings under config["verify"]. Throws std::out_of_range for unknown ids.
CriterionResult run_criterion(int id, const Json& config);

/// Deterministic JSON form (no timings).
Json criterion_json(const CriterionResult& result);

}  // namespace mfac
