#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"

#include "mfac/commands.hpp"
#include "mfac/config.hpp"
#include "mfac/errors.hpp"
#include "mfac/io.hpp"
#include "mfac/oracle.hpp"

using namespace mfac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfac_test_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  FAIL("missing column " << name);
  return 0;
}

Json line3_config(const fs::path& out, std::vector<std::string> sets = {}) {
  Overrides o;
  o.out = out.string();
  o.set = std::move(sets);
  return load_config(std::string(MFAC_SOURCE_DIR) + "/configs/line3.json", o);
}

}  // namespace

TEST_CASE("hashing and number formatting") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(0.625) == "0.625");
  CHECK(std::stod(format_double(1.0 / 3)) == 1.0 / 3);
}

TEST_CASE("csv writer checks widths") {
  CsvWriter w({"a", "b"});
  w.row({"1", "2"});
  CHECK(w.str() == "a,b\n1,2\n");
  CHECK(w.rows() == 1);
  CHECK_THROWS(w.row({"1"}));
}

TEST_CASE("run directories lock and index their files") {
  const fs::path dir = scratch("rundir");
  {
    RunDirectory run(dir);
    CHECK(fs::exists(dir / "run.lock"));
    CHECK_THROWS_AS(RunDirectory{dir}, IoError);
    run.write("sub/x.txt", "hello\n");
    run.write_manifest({{"command", "test"}});
  }
  CHECK_FALSE(fs::exists(dir / "run.lock"));
  const auto manifest = Json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["files"][0]["path"] == "sub/x.txt");
  CHECK(manifest["files"][0]["bytes"] == 6);
  CHECK(check_manifest(dir).empty());
  std::ofstream(dir / "sub/x.txt") << "tampered\n";
  CHECK(check_manifest(dir) == std::vector<std::string>{"sub/x.txt"});
}

TEST_CASE("config loading") {
  const Json c = default_config();
  CHECK(c["model"]["n_agents"] == 4);

  Overrides o;
  o.set = {"model.gamma=0.25", "policy.type=\"logistic\"", "policy.slope=-2"};
  o.seed = 99;
  const Json r = resolve_config(Json::object(), o);
  CHECK(r["model"]["gamma"] == 0.25);
  CHECK(r["policy"]["slope"] == -2);
  CHECK(r["policy"]["bias"] == 0.0);
  CHECK(r["seed"] == 99);

  CHECK_THROWS_AS(resolve_config(Json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(Json{{"model", {{"gamma", "half"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(Json{{"policy", {{"type", "nope"}}}}), ConfigError);
  Overrides nested;
  nested.set = {"model.bogus=1"};
  CHECK_THROWS_AS(resolve_config(Json::object(), nested), ConfigError);
  Overrides malformed;
  malformed.set = {"novalue"};
  CHECK_THROWS_AS(resolve_config(Json::object(), malformed), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), std::exception);
}

TEST_CASE("instances built from config match the canonical instance") {
  const Json c = line3_config("unused");
  const Instance inst = build_instance(c);
  const Instance ref = canonical_line3();
  CHECK(inst.graph.size() == 3);
  CHECK(inst.initial.support.front() == ref.initial.support.front());
  const EmpiricalStateDist mu({2, 1, 1});
  const TeamActionDist h(2, {1, 1, 1, 0, 0, 1});
  CHECK(global_stage_reward(inst.model, inst.graph, mu, h) == global_stage_reward(ref.model, ref.graph, mu, h));
  const ExactOracle a(inst.model, inst.graph), b(ref.model, ref.graph);
  for (std::size_t x = 0; x < a.xi().size(); ++x) CHECK(a.transition_row(x) == b.transition_row(x));

  Json custom = c;
  custom["graph"] = {{"type", "custom"}, {"ids", {5, 9}}, {"edges", {{5, 9}}}};
  custom["model"]["initial"] = {{"type", "counts"}, {"counts", {3, 1}}};
  CHECK(build_instance(custom).graph.size() == 2);
}

TEST_CASE("simulate writes consistent, reproducible trajectories") {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b");
  cmd_simulate(line3_config(a));
  cmd_simulate(line3_config(b));
  const auto team = read_csv(a / "team.csv");
  REQUIRE(team.size() == 101);
  const auto& header = team[0];
  for (std::size_t r = 1; r < team.size(); ++r) {
    const int n = std::stoi(team[r][column(header, "n_0")]) + std::stoi(team[r][column(header, "n_1")]) +
                  std::stoi(team[r][column(header, "n_2")]);
    CHECK(n == 4);
  }
  for (const char* f : {"team.csv", "agents.csv", "agent_counts.csv", "simulate.json"})
    CHECK(slurp(a / f) == slurp(b / f));
  CHECK(Json::parse(slurp(a / "simulate.json"))["coupled_occupancy_identical"] == true);
  CHECK(check_manifest(a).empty());
}

TEST_CASE("coupled agent and team trajectories share occupancy") {
  const Instance inst = canonical_line3();
  const PolicyTable table(LiftedPolicy(occupancy_logistic_policy(0.2, -1.5), 3, 2, 4));
  const auto pi = occupancy_logistic_policy(0.2, -1.5);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto lifted = simulate_coupled(inst, table, pi, 50, seed);
    CHECK(lifted.team_mu == lifted.agent_mu);
    const auto tabled = simulate_coupled(inst, table, std::nullopt, 50, seed);
    CHECK(tabled.team_mu == tabled.agent_mu);
    for (std::size_t t = 0; t < 50; ++t) {
      double avg = 0.0;
      for (double r : tabled.agent_rewards[t]) avg += r / 4.0;
      CHECK(avg == doctest::Approx(tabled.team_reward[t]).epsilon(1e-14));
    }
  }
}

TEST_CASE("oracle dumps") {
  const fs::path a = scratch("oracle_a"), b = scratch("oracle_b");
  cmd_oracle(line3_config(a));
  cmd_oracle(line3_config(b));
  const auto summary = Json::parse(slurp(a / "oracle.json"));
  CHECK(summary["xi_size"] == 126);
  CHECK(summary["n_state_distributions"] == 15);
  for (const char* f : {"xi.csv", "tables.csv", "values.csv", "oracle.json"}) CHECK(slurp(a / f) == slurp(b / f));

  const fs::path flat = scratch("oracle_flat");
  cmd_oracle(line3_config(flat, {"model.reward={\"type\":\"constant\",\"value\":0.5}"}));
  const auto rows = read_csv(flat / "tables.csv");
  const std::size_t qt = column(rows[0], "q_total"), qo = column(rows[0], "q_opt");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    CHECK(std::stod(rows[r][qt]) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(std::stod(rows[r][qo]) == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("train smoke run") {
  const std::vector<std::string> small = {"training.actor.iterations=2", "training.actor.batch=8",
                                          "training.actor.width=8", "training.critic.width=16",
                                          "training.critic.iterations=50"};
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  cmd_train(line3_config(a, small));
  cmd_train(line3_config(b, small));
  CHECK(fs::exists(a / "manifest.json"));
  CHECK(check_manifest(a).empty());
  CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
  const auto log = read_csv(a / "train_log.csv");
  REQUIRE(log.size() == 4);
  const std::size_t j = column(log[0], "j");
  for (std::size_t r = 1; r < log.size(); ++r) CHECK_FALSE(log[r][j].empty());
  const auto summary = Json::parse(slurp(a / "train.json"));
  CHECK(summary["j_source"] == "exact");
  CHECK(fs::exists(a / "checkpoints/best/net_0.bin"));
  std::ifstream bin(a / "checkpoints/final/net_1.bin", std::ios::binary);
  const auto net = TwoLayerNet::read_binary(bin);
  CHECK(net.width() == 8);
}

TEST_CASE("export turns csv into whitespace tables") {
  const fs::path sim = scratch("export_src"), out = scratch("export_out");
  cmd_simulate(line3_config(sim, {"simulate.steps=3"}));
  Json c = line3_config(out);
  c["export"]["input"] = sim.string();
  cmd_export(c);
  const std::string dat = slurp(out / "team.dat");
  CHECK(dat.rfind("# t ", 0) == 0);
  CHECK(dat.find(',') == std::string::npos);
}

TEST_CASE("verify and exit codes") {
  std::ostringstream out, err;
  const fs::path good = scratch("verify_good");
  CHECK(run_command("verify", line3_config(good, {"verify.criteria=[1,4]"}), out, err) == kExitOk);
  const auto report = Json::parse(slurp(good / "report.json"));
  CHECK(report["passed"] == true);
  CHECK(report["criteria"].size() == 2);

  const fs::path bad = scratch("verify_bad");
  const Json corrupted = load_config(std::string(MFAC_SOURCE_DIR) + "/configs/line3_corrupted_kernel.json",
                                     Overrides{{"verify.criteria=[1]"}, std::nullopt, bad.string()});
  CHECK(run_command("verify", corrupted, out, err) == kExitModel);
  CHECK(Json::parse(slurp(bad / "report.json"))["model_validation"]["passed"] == false);

  const fs::path cap = scratch("cap");
  CHECK(run_command("oracle", line3_config(cap, {"model.n_agents=40", "model.initial={\"type\":\"even\"}"}), out, err) ==
        kExitCap);
  CHECK(err.str().find("2531340") != std::string::npos);
  CHECK(run_command("nonsense", line3_config(scratch("x")), out, err) == kExitConfig);
}
