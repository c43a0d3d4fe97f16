#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mfac/env.hpp"
#include "mfac/ltde.hpp"
#include "mfac/policy.hpp"

namespace mfac {

using Json = nlohmann::ordered_json;

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "MFAC_OUTPUT_ROOT";

/// Every key with its default value. User configs are merged onto this and
/// may not introduce keys of their own.
Json default_config();

/// Command-line adjustments applied before validation.
struct Overrides {
  std::vector<std::string> set;  // "dotted.path=value"; value parsed as JSON, else string
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

/// Reads a JSON file (or uses an empty object when path is empty), applies
/// overrides and merges onto the defaults. Throws ConfigError.
Json load_config(const std::string& path, const Overrides& overrides = {});
Json resolve_config(Json user, const Overrides& overrides = {});

/// Applies one "a.b.c=value" assignment to a JSON object.
void apply_assignment(Json& doc, const std::string& assignment);

StateGraph build_graph(const Json& graph);
ModelSpec build_model(const Json& model, const StateGraph& graph);
InitialDistribution build_initial(const Json& initial, const StateGraph& graph, int n_agents);
Instance build_instance(const Json& config);

/// The configured policy. Energy policies are initialized from policy.seed,
/// or from the run seed when that is null.
std::unique_ptr<TeamPolicy> build_policy(const Json& policy, const Instance& instance,
                                         std::uint64_t seed,
                                         double candidate_cap = kDefaultCandidateCap);
/// The individual policy behind a lifted configuration, if any.
std::optional<IndividualPolicy> build_individual_policy(const Json& policy,
                                                        const Instance& instance);

CriticConfig build_critic_config(const Json& critic);
ActorConfig build_actor_config(const Json& training);

/// Output directory: --out, then the config's output_dir, then
/// $MFAC_OUTPUT_ROOT/<command>, then runs/<command>.
std::string resolve_output_dir(const Json& config, const std::string& command);

}  // namespace mfac
