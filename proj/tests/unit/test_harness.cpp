#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "damo/errors.hpp"
#include "damo/experiment.hpp"
#include "damo/fileio.hpp"
#include "doctest.h"

using namespace damo;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  return experiment_config_from(KeyValueConfig::parse(text));
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("damo_harness_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json fake_report(const std::string& env, const std::string& method,
                           const std::vector<double>& j_real) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < j_real.size(); ++i)
    runs.push_back({{"method", method},
                    {"seed", i},
                    {"metrics",
                     {{"J_real", j_real[i]},
                      {"J_model", 1.0},
                      {"ood_state_rate", 0.0},
                      {"tv_model_vs_real", 0.5},
                      {"tv_synth_vs_offline", 0.25},
                      {"mean_q_eval", 2.0}}}});
  return {{"env", env}, {"runs", runs}};
}

}  // namespace

TEST_CASE("experiment config keys") {
  const ExperimentConfig c = parse(
      "env = shift-gridworld\n"
      "env.slip = 0.2\n"
      "methods = damo, bc\n"
      "seeds = 3, 4\n"
      "alpha = 0.5\n"
      "lambda_u = 2\n");
  CHECK(c.env == "shift-gridworld");
  CHECK(c.env_params.at("slip") == 0.2);
  CHECK(c.methods == std::vector<std::string>{"damo", "bc"});
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.solver.alpha == 0.5);
  CHECK(c.lambda_u == 2.0);
  CHECK(parse("seed = 9\n").seeds == std::vector<std::uint64_t>{9});
}

TEST_CASE("experiment config diagnostics name line and key") {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("env = three-road\nfoo = 1\n").find("line 2: unknown key 'foo'") == 0);
  CHECK(message("methods = damo, sac\n").find("line 1: key 'methods'") == 0);
  CHECK(message("\nseeds = 1, x\n").find("line 2: key 'seeds'") == 0);
  CHECK(message("epochs = ten\n").find("line 1: key 'epochs'") == 0);
  CHECK(message("methods = bc, bc\n").find("listed twice") != std::string::npos);
  CHECK_THROWS_AS(parse("env = mountain-car\n"), UnknownEnv);
  CHECK_THROWS_AS(parse("env = three-road\nenv.width = 3\n"), ConfigError);
}

TEST_CASE("method variants") {
  const SolverConfig base;
  CHECK(!method_solver_config("wo-er", base).data_alignment);
  CHECK(method_solver_config("wo-ir", base).fgen_name == "linear");
  CHECK(method_solver_config("inconsistent", base).policy_update == PolicyUpdate::inconsistent);
  CHECK(method_solver_config("damo", base).fgen_name == base.fgen_name);
  CHECK_THROWS_AS(method_solver_config("bc", base), ConfigError);
}

TEST_CASE("report aggregation") {
  SUBCASE("one report passes through with std 0") {
    const std::string csv = aggregate_reports({fake_report("three-road", "damo", {0.6})}, OutputFormat::csv);
    CHECK(csv.find("three-road,damo,1,1,0.6,0,1,0,0,0,0.5,0,0.25,0,2,0\n") != std::string::npos);
  }
  SUBCASE("four seeds give mean and sample std") {
    const std::string out =
        aggregate_reports({fake_report("three-road", "damo", {1, 2, 3, 4})}, OutputFormat::json);
    const auto doc = nlohmann::json::parse(out);
    const auto& j = doc["rows"][0]["metrics"]["J_real"];
    CHECK(j["mean"].get<double>() == doctest::Approx(2.5));
    CHECK(j["std"].get<double>() == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(doc["rows"][0]["n_seeds"] == 4);
  }
  SUBCASE("mixed envs are grouped per env") {
    const std::string csv = aggregate_reports(
        {fake_report("three-road", "damo", {1}), fake_report("random-mdp", "damo", {2}),
         fake_report("three-road", "damo", {3})},
        OutputFormat::csv);
    CHECK(csv.find("three-road,damo,2,") != std::string::npos);
    CHECK(csv.find("random-mdp,damo,1,") != std::string::npos);
  }
  CHECK_THROWS_AS(aggregate_reports({nlohmann::json::array()}, OutputFormat::csv), ConfigError);
}

TEST_CASE("report command") {
  const fs::path dir = scratch("report");
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_report({(dir / "*.json").string()}, OutputFormat::csv, "", out), ConfigError);
  atomic_write((dir / "a" / "report.json").string(), fake_report("chain", "bc", {1, 3}).dump());
  atomic_write((dir / "b" / "report.json").string(), fake_report("chain", "bc", {5}).dump());
  CHECK(cmd_report({(dir / "*" / "report.json").string()}, OutputFormat::csv, "", out) == 0);
  CHECK(out.str().find("chain,bc,3,2,3,2,") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("run writes deterministic, well-formed reports") {
  const fs::path dir = scratch("run");
  atomic_write((dir / "exp.cfg").string(),
               "env = three-road\nmethods = damo, naive-mb, mopo-style\nseeds = 0, 1\nepochs = 10\n");
  std::ostringstream log;
  CHECK(cmd_run((dir / "exp.cfg").string(), {}, (dir / "a").string(), log) == 0);
  CHECK(cmd_run((dir / "exp.cfg").string(), {}, (dir / "b").string(), log) == 0);
  for (const char* name : {"report.json", "trace_damo_seed0.csv", "trace_damo_seed1.csv"})
    CHECK(read_file((dir / "a" / name).string()) == read_file((dir / "b" / name).string()));
  CHECK(!fs::exists(dir / "a" / "trace_naive-mb_seed0.csv"));

  const auto rep = nlohmann::json::parse(read_file((dir / "a" / "report.json").string()));
  CHECK(rep["runs"].size() == 6);
  for (const auto& run : rep["runs"]) {
    for (const auto& [k, v] : run["metrics"].items()) CHECK(std::isfinite(v.get<double>()));
    for (const char* rate : {"ood_state_rate", "tv_model_vs_real", "tv_synth_vs_offline"}) {
      CHECK(run["metrics"][rate].get<double>() >= 0.0);
      CHECK(run["metrics"][rate].get<double>() <= 1.0);
    }
  }
  const std::string trace = read_file((dir / "a" / "trace_damo_seed0.csv").string());
  CHECK(trace.rfind("epoch,inner_obj,surrogate,J_real,J_model,mean_q_eval,fp_residual\n", 0) == 0);

  RunOverrides ov;
  ov.seed = 7;
  ov.baseline = "bc";
  CHECK(cmd_run((dir / "exp.cfg").string(), ov, (dir / "c").string(), log) == 0);
  const auto one = nlohmann::json::parse(read_file((dir / "c" / "report.json").string()));
  CHECK(one["runs"].size() == 1);
  CHECK(one["runs"][0]["method"] == "bc");
  CHECK(one["runs"][0]["seed"] == 7);
  ov.baseline = "sac";
  CHECK_THROWS_AS(cmd_run((dir / "exp.cfg").string(), ov, (dir / "d").string(), log), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("dataset files feed runs") {
  const fs::path dir = scratch("dataset");
  const EnvInstance env = build_env("chain");
  atomic_write((dir / "chain.jsonl").string(),
               write_jsonl(collect_dataset(env.mdp, env.behavior, 3, 10, 1)));
  atomic_write((dir / "ok.cfg").string(), "env = chain\nmethods = bc\ndataset = chain.jsonl\n");
  const ExperimentConfig c = load_experiment_config((dir / "ok.cfg").string());
  const ExperimentResult r = run_experiment(c);
  CHECK(r.runs.size() == 1);
  CHECK(r.runs[0].j_real == doctest::Approx(policy_return(env.mdp, StochasticPolicy::uniform(2, 1))));

  atomic_write((dir / "bad.cfg").string(), "env = self-loop\nmethods = bc\ndataset = chain.jsonl\n");
  CHECK_THROWS_AS(run_experiment(load_experiment_config((dir / "bad.cfg").string())), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("verify command") {
  const fs::path dir = scratch("verify");
  std::ostringstream out;
  CHECK(cmd_verify("fenchel", {}, dir.string(), out) == 0);
  const auto doc = nlohmann::json::parse(read_file((dir / "verify.json").string()));
  CHECK(doc["passed"] == true);
  CHECK(doc["suites"][0]["assertions"] == documented_assertions("fenchel"));
  CHECK_THROWS_AS(cmd_verify("theorem-9", {}, "", out), ConfigError);
  fs::remove_all(dir);
}
