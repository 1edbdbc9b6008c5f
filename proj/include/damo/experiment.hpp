#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "damo/config.hpp"
#include "damo/envs.hpp"
#include "damo/serialize.hpp"
#include "damo/solver.hpp"
#include "damo/verify.hpp"

namespace damo {

// damo, wo-er, wo-ir, inconsistent, bc, naive-mb, mopo-style.
const std::vector<std::string>& method_names();
bool is_solver_method(const std::string& method);

// The solver settings a method runs with: wo-er drops the data-alignment
// term, wo-ir swaps in the linear generator, inconsistent switches the
// policy update.
SolverConfig method_solver_config(const std::string& method, const SolverConfig& base);

struct ExperimentConfig {
  std::string env = "three-road";
  EnvParams env_params;
  std::uint64_t env_seed = 0;
  std::vector<std::string> methods = {"damo"};
  std::vector<std::uint64_t> seeds = {0};
  // 0 takes the environment's suggested collection size.
  int n_episodes = 0;
  int horizon = 0;
  // JSONL dataset file; empty collects a fresh buffer per seed.
  std::string dataset;
  double lambda_u = 1.0;
  int ensemble_size = 7;
  int ensemble_elites = 5;
  double ensemble_holdout = 0.2;
  double bc_smoothing = 0.0;
  SolverConfig solver;

  void validate() const;
};

// Harness keys: env, env.<param>, env_seed, methods, seeds, n_episodes,
// horizon, dataset, lambda_u, ensemble_size, ensemble_elites,
// ensemble_holdout, bc_smoothing. Everything else goes to
// solver_config_from. Unknown keys throw ConfigError.
ExperimentConfig experiment_config_from(const KeyValueConfig& kv);
ExperimentConfig load_experiment_config(const std::string& path);

struct RunMetrics {
  std::string method;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  double j_real = 0.0;
  double j_model = 0.0;
  // rho_real^pi mass on states that never appear in the offline buffer.
  double ood_state_rate = 0.0;
  // TV(rho_M^pi, rho_T^pi) on exact occupancies.
  double tv_model_vs_real = 0.0;
  // TV between the empirical distributions of model rollouts under pi and
  // of the offline buffer.
  double tv_synth_vs_offline = 0.0;
  // Critic value at the estimated initial distribution.
  double mean_q_eval = 0.0;
  int start_state = 0;
  int start_action = 0;
  std::vector<double> start_policy;
  // Solver methods only.
  std::optional<TrainingTrace> trace;
  double seconds = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string env_hash;
  std::vector<RunMetrics> runs;
};

RunMetrics run_method(const std::string& method, const EnvInstance& env,
                      const TransitionDataset& d_r, const ExperimentConfig& cfg,
                      std::uint64_t seed);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

ordered_json experiment_config_to_json(const ExperimentConfig& cfg);
// Everything except timings.
ordered_json report_to_json(const ExperimentResult& result);
ordered_json timing_to_json(const ExperimentResult& result);
std::string trace_file_name(const std::string& method, std::uint64_t seed);

// report.json, timing.json and one trace CSV per solver run.
std::vector<std::string> write_experiment(const ExperimentResult& result,
                                          const std::string& out_dir);

enum class OutputFormat { json, csv };
OutputFormat output_format_from_string(const std::string& s);

// Rows grouped by (env, method) with mean and sample std of each metric
// over every run in the given report documents.
std::string aggregate_reports(const std::vector<nlohmann::json>& reports, OutputFormat format);

// Command entry points. Usage problems throw ConfigError; the return value
// is the process exit code.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> baseline;
  std::optional<double> lambda_u;
};
int cmd_run(const std::string& config_path, const RunOverrides& overrides,
            const std::string& out_dir, std::ostream& log);
// Writes verify.json into out_dir, or prints it when out_dir is empty.
int cmd_verify(const std::string& suite, const VerifyOptions& opts, const std::string& out_dir,
               std::ostream& out);
// Expands each pattern with glob(3); throws ConfigError when nothing matches.
int cmd_report(const std::vector<std::string>& patterns, OutputFormat format,
               const std::string& out_dir, std::ostream& out);

}  // namespace damo
