// Runs every acceptance criterion on the canonical line3 instance and prints
// one line per criterion. Pass criterion ids as arguments to run a subset.
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <vector>

#include "mfac/config.hpp"
#include "mfac/verify.hpp"

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  if (ids.empty())
    for (int id = 1; id <= mfac::kCriterionCount; ++id) ids.push_back(id);

  const mfac::Json config = mfac::resolve_config(mfac::Json::object());
  int failures = 0;
  for (int id : ids) {
    mfac::CriterionResult r;
    try {
      r = mfac::run_criterion(id, config);
    } catch (const std::exception& e) {
      std::printf("criterion %2d FAIL  %s: threw %s\n", id, mfac::criterion_name(id).c_str(), e.what());
      ++failures;
      continue;
    }
    const bool ok = r.passed && !r.runtime_exceeded;
    if (!ok) ++failures;
    std::printf("criterion %2d %s  %-36s %8.2fs (limit %.0fs)%s\n", id, ok ? "PASS" : "FAIL",
                r.name.c_str(), r.seconds, r.limit_seconds,
                r.runtime_exceeded ? " runtime exceeded" : "");
    std::printf("    %s\n", r.measured.dump().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(ids.size()) - failures, ids.size());
  return failures == 0 ? 0 : 1;
}
