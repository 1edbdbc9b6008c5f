#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "damo/dataset.hpp"
#include "damo/envs.hpp"
#include "damo/errors.hpp"
#include "damo/experiment.hpp"
#include "damo/fileio.hpp"
#include "damo/serialize.hpp"

namespace {

damo::EnvParams parse_params(const std::vector<std::string>& items) {
  damo::EnvParams out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw damo::ConfigError("--param expects key=value, got '" + item + "'");
    const std::string value = item.substr(eq + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty())
      throw damo::ConfigError("--param " + item.substr(0, eq) + ": expected a number, got '" +
                              value + "'");
    out[item.substr(0, eq)] = v;
  }
  return out;
}

void emit(const std::string& out_dir, const std::string& name, const std::string& content) {
  if (out_dir.empty()) {
    std::cout << content;
    return;
  }
  const std::string path = (std::filesystem::path(out_dir) / name).string();
  damo::atomic_write(path, content);
  std::cout << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-alignment maximin optimization on tabular MDPs"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir;
  std::string format = "json";

  auto* env_cmd = app.add_subcommand("env", "Inspect the environment catalog");
  env_cmd->require_subcommand(1);
  auto* env_list = env_cmd->add_subcommand("list", "List catalog environments");
  env_list->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  auto* env_show = env_cmd->add_subcommand("show", "Print an environment as JSON");
  std::string env_name;
  std::vector<std::string> params;
  env_show->add_option("name", env_name, "Environment name")->required();
  env_show->add_option("--param", params, "Builder parameter key=value (repeatable)");
  env_show->add_option("--seed", seed, "Builder seed");
  env_show->add_option("--out-dir", out_dir, "Write env_<name>.json here instead of stdout");

  auto* gen = app.add_subcommand("gen-data", "Collect an offline dataset as JSONL");
  int episodes = 0;
  int horizon = 0;
  bool strip_labels = false;
  gen->add_option("env", env_name, "Environment name")->required();
  gen->add_option("--param", params, "Builder parameter key=value (repeatable)");
  gen->add_option("--episodes", episodes, "Episodes (default: environment suggestion)");
  gen->add_option("--horizon", horizon, "Episode length (default: environment suggestion)");
  gen->add_option("--seed", seed, "Collection seed");
  std::uint64_t env_seed = 0;
  gen->add_option("--env-seed", env_seed, "Builder seed (random-mdp)");
  gen->add_flag("--strip-initial-labels", strip_labels, "Do not mark episode starts");
  gen->add_option("--out-dir", out_dir, "Output directory (default: current directory)");

  auto* run = app.add_subcommand("run", "Train the configured methods and write reports");
  std::string config_path;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::string> baseline;
  std::optional<double> lambda_u;
  run->add_option("config", config_path, "Experiment config (key = value)")->required();
  run->add_option("--seed", run_seed, "Run this seed only");
  run->add_option("--baseline", baseline, "Run a single baseline")
      ->check(CLI::IsMember({"bc", "naive-mb", "mopo-style"}));
  run->add_option("--lambda-u", lambda_u, "Uncertainty penalty weight for mopo-style");
  run->add_option("--out-dir", out_dir, "Output directory (default: current directory)");

  auto* verify = app.add_subcommand("verify", "Run the verification suites");
  std::string suite = "all";
  std::int64_t mc_samples = damo::VerifyOptions{}.mc_samples;
  verify->add_option("suite", suite, "all or one suite name");
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--mc-samples", mc_samples, "Monte Carlo samples per policy (occupancy)");
  verify->add_option("--out-dir", out_dir, "Write verify.json here instead of stdout");

  auto* report = app.add_subcommand("report", "Aggregate report.json files across seeds");
  std::vector<std::string> patterns;
  report->add_option("patterns", patterns, "Glob patterns of report files")->required();
  report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"json", "csv"}));
  report->add_option("--out-dir", out_dir, "Write summary.<format> here instead of stdout");
  // report defaults to csv; the other commands to json.
  report->preparse_callback([&](std::size_t) { format = "csv"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (env_list->parsed()) {
      if (format == "csv") {
        std::string out = "name,n_states,n_actions,description\n";
        for (const auto& e : damo::env_catalog()) {
          const damo::EnvInstance inst = e.build(e.defaults, 0);
          out += e.name + "," + std::to_string(inst.mdp.n_states) + "," +
                 std::to_string(inst.mdp.n_actions) + ",\"" + e.description + "\"\n";
        }
        std::cout << out;
      } else {
        damo::ordered_json rows = damo::ordered_json::array();
        for (const auto& e : damo::env_catalog()) {
          damo::ordered_json defaults = damo::ordered_json::object();
          for (const auto& [k, v] : e.defaults) defaults[k] = v;
          rows.push_back({{"name", e.name}, {"description", e.description}, {"params", defaults}});
        }
        std::cout << rows.dump(2) << "\n";
      }
      return 0;
    }
    if (env_show->parsed()) {
      const damo::EnvInstance inst = damo::build_env(env_name, parse_params(params), seed);
      damo::ordered_json doc;
      doc["name"] = inst.name;
      doc["seed"] = seed;
      doc["env_hash"] = damo::env_hash(inst.mdp);
      doc["n_episodes"] = inst.n_episodes;
      doc["horizon"] = inst.horizon;
      doc["mdp"] = damo::mdp_to_json(inst.mdp);
      doc["behavior"] = damo::sa_table_to_json(inst.behavior.probs());
      emit(out_dir, "env_" + env_name + ".json", doc.dump(2) + "\n");
      return 0;
    }
    if (gen->parsed()) {
      const damo::EnvInstance inst = damo::build_env(env_name, parse_params(params), env_seed);
      const int n = episodes > 0 ? episodes : inst.n_episodes;
      const int h = horizon > 0 ? horizon : inst.horizon;
      const damo::TransitionDataset ds =
          damo::collect_dataset(inst.mdp, inst.behavior, n, h, seed, strip_labels);
      const std::string dir = out_dir.empty() ? "." : out_dir;
      emit(dir, "dataset_" + env_name + "_seed" + std::to_string(seed) + ".jsonl",
           damo::write_jsonl(ds));
      return 0;
    }
    if (run->parsed()) {
      damo::RunOverrides ov;
      ov.seed = run_seed;
      ov.baseline = baseline;
      ov.lambda_u = lambda_u;
      return damo::cmd_run(config_path, ov, out_dir, std::cout);
    }
    if (verify->parsed()) {
      damo::VerifyOptions opts;
      opts.seed = seed;
      opts.mc_samples = mc_samples;
      return damo::cmd_verify(suite, opts, out_dir, std::cout);
    }
    if (report->parsed())
      return damo::cmd_report(patterns, damo::output_format_from_string(format), out_dir,
                              std::cout);
  } catch (const damo::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const damo::UnknownEnv& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const damo::MalformedLine& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
