#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfac/config.hpp"
#include "mfac/env.hpp"
#include "mfac/policy.hpp"

namespace mfac {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitCap = 3,
  kExitVerifyFailed = 4,
  kExitIo = 5,
  kExitModel = 6,
  kExitNonConvergence = 7,
  kExitInternal = 70,
};

std::string version_string();

/// Agent-level and team-level trajectories driven by identically seeded
/// generators. The agent-level run consumes random draws in the same order
/// as the team-level step, so both produce the same occupancy sequence.
struct CoupledTrajectory {
  std::vector<EmpiricalStateDist> team_mu;   // steps + 1 entries
  std::vector<TeamActionDist> team_h;        // steps entries
  std::vector<double> team_reward;           // global stage reward per step
  std::vector<AgentProfile> agents;          // steps entries, with actions
  std::vector<std::vector<double>> agent_rewards;
  std::vector<EmpiricalStateDist> agent_mu;  // steps + 1 entries
};

/// `individual` may be empty, in which case actions come from the team policy
/// table and are handed to agents at each state in id order.
CoupledTrajectory simulate_coupled(const Instance& instance, const PolicyTable& table,
                                   const std::optional<IndividualPolicy>& individual, int steps,
                                   std::uint64_t seed);

// Each command writes into its resolved output directory and returns it.
// Failures surface as the library's exception types; exit_code_for maps them.
std::filesystem::path cmd_simulate(const Json& config);
std::filesystem::path cmd_oracle(const Json& config);
std::filesystem::path cmd_train(const Json& config, std::ostream* progress = nullptr);
std::filesystem::path cmd_export(const Json& config);

struct VerifyOutcome {
  std::filesystem::path dir;
  Json report;
  bool passed = false;
  bool model_valid = true;
};
VerifyOutcome cmd_verify(const Json& config, std::ostream* progress = nullptr);

/// Exit status for the exception currently being handled.
int exit_code_for_current_exception(std::string& message);

/// Dispatches one subcommand by name; prints failures to `err`.
int run_command(const std::string& name, const Json& config, std::ostream& out,
                std::ostream& err);

}  // namespace mfac
