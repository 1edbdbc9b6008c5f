#include "damo/experiment.hpp"

#include <glob.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "damo/baselines.hpp"
#include "damo/errors.hpp"
#include "damo/fileio.hpp"
#include "damo/rng.hpp"

namespace damo {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = cur.find_last_not_of(" \t");
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::uint64_t parse_seed(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 0) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"damo", "wo-er",    "wo-ir",     "inconsistent",
                                                 "bc",   "naive-mb", "mopo-style"};
  return names;
}

bool is_solver_method(const std::string& method) {
  return method == "damo" || method == "wo-er" || method == "wo-ir" || method == "inconsistent";
}

SolverConfig method_solver_config(const std::string& method, const SolverConfig& base) {
  SolverConfig c = base;
  if (method == "wo-er") c.data_alignment = false;
  else if (method == "wo-ir") c.fgen_name = "linear";
  else if (method == "inconsistent") c.policy_update = PolicyUpdate::inconsistent;
  else if (method != "damo") throw ConfigError("'" + method + "' is not a solver method");
  return c;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("invalid methods: empty list");
  std::set<std::string> seen;
  for (const std::string& m : methods) {
    if (std::find(method_names().begin(), method_names().end(), m) == method_names().end())
      throw ConfigError("invalid methods: unknown method '" + m + "'");
    if (!seen.insert(m).second) throw ConfigError("invalid methods: '" + m + "' listed twice");
  }
  if (seeds.empty()) throw ConfigError("invalid seeds: empty list");
  if (n_episodes < 0) throw ConfigError("invalid n_episodes: must be >= 0");
  if (horizon < 0) throw ConfigError("invalid horizon: must be >= 0");
  if (!(lambda_u >= 0.0)) throw ConfigError("invalid lambda_u: must be >= 0");
  if (ensemble_size < 1) throw ConfigError("invalid ensemble_size: must be >= 1");
  if (ensemble_elites < 1 || ensemble_elites > ensemble_size)
    throw ConfigError("invalid ensemble_elites: must be in [1, ensemble_size]");
  if (!(ensemble_holdout >= 0.0 && ensemble_holdout < 1.0))
    throw ConfigError("invalid ensemble_holdout: must be in [0, 1)");
  if (!(bc_smoothing >= 0.0)) throw ConfigError("invalid bc_smoothing: must be >= 0");
  solver.validate();
}

ExperimentConfig experiment_config_from(const KeyValueConfig& kv) {
  ExperimentConfig c;
  auto with_key = [&](const std::string& key, auto&& parse) {
    const KeyValueConfig::Entry* e = kv.find(key);
    if (!e) return;
    try {
      parse(e->value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e->line) + ": key '" + key + "': " + err.what());
    }
  };
  c.env = kv.get_string("env", c.env);
  c.env_seed = static_cast<std::uint64_t>(kv.get_int("env_seed", 0));
  for (const auto& [key, e] : kv.entries())
    if (key.rfind("env.", 0) == 0) c.env_params[key.substr(4)] = kv.get_double(key, 0.0);
  with_key("methods", [&](const std::string& v) { c.methods = split_list(v); });
  c.solver = solver_config_from(kv);
  if (kv.has("seed")) c.seeds = {c.solver.seed};
  with_key("seeds", [&](const std::string& v) {
    c.seeds.clear();
    for (const std::string& s : split_list(v)) c.seeds.push_back(parse_seed(s));
  });
  c.n_episodes = static_cast<int>(kv.get_int("n_episodes", c.n_episodes));
  c.horizon = static_cast<int>(kv.get_int("horizon", c.horizon));
  c.dataset = kv.get_string("dataset", c.dataset);
  c.lambda_u = kv.get_double("lambda_u", c.lambda_u);
  c.ensemble_size = static_cast<int>(kv.get_int("ensemble_size", c.ensemble_size));
  c.ensemble_elites = static_cast<int>(kv.get_int("ensemble_elites", c.ensemble_elites));
  c.ensemble_holdout = kv.get_double("ensemble_holdout", c.ensemble_holdout);
  c.bc_smoothing = kv.get_double("bc_smoothing", c.bc_smoothing);
  kv.reject_unused();
  try {
    c.validate();
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    for (const auto& [key, e] : kv.entries())
      if (msg.find("invalid " + key + ":") == 0)
        throw ConfigError("line " + std::to_string(e.line) + ": key '" + key + "': " + msg);
    throw;
  }
  // Surfaces UnknownEnv and bad env.<param> keys before any training.
  build_env(c.env, c.env_params, c.env_seed);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  ExperimentConfig c = experiment_config_from(KeyValueConfig::parse(read_file(path)));
  if (!c.dataset.empty()) {
    const std::filesystem::path p(c.dataset);
    if (p.is_relative()) c.dataset = (std::filesystem::path(path).parent_path() / p).string();
  }
  return c;
}

RunMetrics run_method(const std::string& method, const EnvInstance& env,
                      const TransitionDataset& d_r, const ExperimentConfig& cfg,
                      std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const int ns = env.mdp.n_states;
  const int na = env.mdp.n_actions;
  RunMetrics m;
  m.method = method;
  m.seed = seed;
  m.dataset_hash = sha256_hex(write_jsonl(d_r));

  SolverConfig scfg = is_solver_method(method) ? method_solver_config(method, cfg.solver) : cfg.solver;
  scfg.seed = seed;
  StochasticPolicy pi;
  SolverContext ctx;
  if (is_solver_method(method)) {
    MaximinResult res = solve_maximin(&env.mdp, d_r, scfg);
    pi = res.state.policy;
    ctx = std::move(res.context);
    m.mean_q_eval = res.state.trace.records.empty() ? 0.0 : res.state.trace.records.back().mean_q_eval;
    m.trace = std::move(res.state.trace);
  } else {
    ctx = make_context(d_r, scfg);
    const BaselineKind kind = baseline_from_string(method);
    QFunction q;
    if (kind == BaselineKind::bc) {
      pi = behavior_cloning(d_r, ns, na, cfg.bc_smoothing);
      q = policy_evaluation(ctx.model_mdp, pi);
    } else if (kind == BaselineKind::naive_mb) {
      pi = plan_on_model(ctx.model_mdp, nullptr);
      q = policy_evaluation(ctx.model_mdp, pi);
    } else {
      const ModelEnsemble ens =
          ensemble_fit(d_r, ns, na, cfg.ensemble_size, cfg.ensemble_elites, cfg.ensemble_holdout,
                       derive_seed(seed, 0x3e5), scfg.smoothing, scfg.unseen_policy);
      const SaTable penalty = mopo_penalty(ens, cfg.lambda_u);
      pi = plan_on_model(ctx.model_mdp, &penalty);
      SaTable r = expected_reward(ctx.model_mdp);
      for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] -= penalty.data()[i];
      q = policy_evaluation(ctx.model_mdp, pi, r);
    }
    const std::vector<double> v = state_values(pi, q.q);
    for (int s = 0; s < ns; ++s) m.mean_q_eval += ctx.mu0[s] * v[s];
  }

  m.j_real = policy_return(env.mdp, pi);
  m.j_model = policy_return(ctx.model_mdp, pi);
  const OccupancyMeasure rho_t = transition_occupancy(env.mdp, pi);
  const OccupancyMeasure rho_m = transition_occupancy(ctx.model_mdp, pi);
  m.tv_model_vs_real = total_variation(rho_m, rho_t);

  std::vector<bool> in_data(static_cast<std::size_t>(ns), false);
  for (const Transition& t : d_r.transitions) in_data[t.s] = in_data[t.sp] = true;
  const std::vector<double> state_mass = rho_t.state();
  for (int s = 0; s < ns; ++s)
    if (!in_data[s]) m.ood_state_rate += state_mass[s];
  m.ood_state_rate = std::clamp(m.ood_state_rate, 0.0, 1.0);

  const std::vector<int> starts =
      branch_start_states(d_r, scfg.n_rollouts, derive_seed(seed, 0x900));
  const TransitionDataset d_m =
      rollout_synthetic(ctx.model, pi, starts, scfg.rollout_k, derive_seed(seed, 0x901));
  m.tv_synth_vs_offline = total_variation(empirical_distribution(d_m, ns, na).data(),
                                          empirical_distribution(d_r, ns, na).data());

  m.start_state = static_cast<int>(
      std::max_element(env.mdp.initial_dist.begin(), env.mdp.initial_dist.end()) -
      env.mdp.initial_dist.begin());
  m.start_action = pi.argmax(m.start_state);
  const auto row = pi.probs().row(m.start_state);
  m.start_policy.assign(row.begin(), row.end());
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const EnvInstance env = build_env(cfg.env, cfg.env_params, cfg.env_seed);
  ExperimentResult result;
  result.config = cfg;
  result.env_hash = env_hash(env.mdp);

  std::optional<TransitionDataset> fixed;
  if (!cfg.dataset.empty()) {
    fixed = read_jsonl(read_file(cfg.dataset));
    if (!fixed->env_hash.empty() && fixed->env_hash != result.env_hash)
      throw ConfigError("dataset " + cfg.dataset + " was collected on env hash " +
                        fixed->env_hash + ", not " + result.env_hash);
    if (fixed->n_states != env.mdp.n_states || fixed->n_actions != env.mdp.n_actions)
      throw ConfigError("dataset " + cfg.dataset + " does not match the environment's shape");
  }
  const int n_episodes = cfg.n_episodes > 0 ? cfg.n_episodes : env.n_episodes;
  const int horizon = cfg.horizon > 0 ? cfg.horizon : env.horizon;
  for (std::uint64_t seed : cfg.seeds) {
    const TransitionDataset d_r =
        fixed ? *fixed : collect_dataset(env.mdp, env.behavior, n_episodes, horizon, seed);
    for (const std::string& method : cfg.methods)
      result.runs.push_back(run_method(method, env, d_r, cfg, seed));
  }
  return result;
}

ordered_json experiment_config_to_json(const ExperimentConfig& cfg) {
  ordered_json env_params = ordered_json::object();
  for (const auto& [k, v] : cfg.env_params) env_params[k] = v;
  const SolverConfig& s = cfg.solver;
  ordered_json solver;
  solver["alpha"] = s.alpha;
  solver["fgen_name"] = s.fgen_name;
  solver["inner_steps"] = s.inner_steps;
  solver["outer_steps"] = s.outer_steps;
  solver["epochs"] = s.epochs;
  solver["q_step_size"] = s.q_step_size;
  solver["policy_step_size"] = s.policy_step_size;
  solver["fixed_alpha_actor"] = s.fixed_alpha_actor;
  solver["offline_ratio"] = s.offline_ratio;
  solver["rollout_k"] = s.rollout_k;
  solver["ratio_mode"] = to_string(s.ratio_mode);
  solver["double_q"] = s.double_q;
  solver["entropy_coef"] = s.entropy_coef;
  solver["discount"] = s.discount;
  solver["mode"] = to_string(s.mode);
  solver["policy_update"] = to_string(s.policy_update);
  solver["data_alignment"] = s.data_alignment;
  solver["clip"] = s.clip;
  solver["smoothing"] = s.smoothing;
  solver["unseen_policy"] = to_string(s.unseen_policy);
  solver["unseen_reward"] = s.unseen_reward;
  solver["n_rollouts"] = s.n_rollouts;
  solver["rollout_from_initial"] = s.rollout_from_initial;
  solver["batch_size"] = s.batch_size;
  solver["classifier_steps"] = s.classifier.steps;
  solver["classifier_step_size"] = s.classifier.step_size;
  solver["classifier_balance"] = s.classifier.balance;
  solver["classifier_samples"] = s.classifier.n_samples;
  solver["classifier_seed"] = s.classifier.seed;

  ordered_json out;
  out["env"] = cfg.env;
  out["env_params"] = env_params;
  out["env_seed"] = cfg.env_seed;
  out["methods"] = cfg.methods;
  out["seeds"] = cfg.seeds;
  out["n_episodes"] = cfg.n_episodes;
  out["horizon"] = cfg.horizon;
  out["dataset"] = cfg.dataset.empty() ? ordered_json() : ordered_json(cfg.dataset);
  out["lambda_u"] = cfg.lambda_u;
  out["ensemble_size"] = cfg.ensemble_size;
  out["ensemble_elites"] = cfg.ensemble_elites;
  out["ensemble_holdout"] = cfg.ensemble_holdout;
  out["bc_smoothing"] = cfg.bc_smoothing;
  out["solver"] = solver;
  return out;
}

std::string trace_file_name(const std::string& method, std::uint64_t seed) {
  return "trace_" + method + "_seed" + std::to_string(seed) + ".csv";
}

ordered_json report_to_json(const ExperimentResult& result) {
  ordered_json runs = ordered_json::array();
  for (const RunMetrics& m : result.runs) {
    ordered_json metrics;
    metrics["J_real"] = m.j_real;
    metrics["J_model"] = m.j_model;
    metrics["ood_state_rate"] = m.ood_state_rate;
    metrics["tv_model_vs_real"] = m.tv_model_vs_real;
    metrics["tv_synth_vs_offline"] = m.tv_synth_vs_offline;
    metrics["mean_q_eval"] = m.mean_q_eval;
    ordered_json run;
    run["method"] = m.method;
    run["seed"] = m.seed;
    run["dataset_hash"] = m.dataset_hash;
    run["metrics"] = metrics;
    run["start_state"] = m.start_state;
    run["start_action"] = m.start_action;
    run["start_policy"] = m.start_policy;
    run["trace"] = m.trace ? ordered_json(trace_file_name(m.method, m.seed)) : ordered_json();
    runs.push_back(run);
  }
  ordered_json out;
  out["env"] = result.config.env;
  out["env_hash"] = result.env_hash;
  out["config"] = experiment_config_to_json(result.config);
  out["seeds"] = result.config.seeds;
  out["timing"] = "timing.json";
  out["runs"] = runs;
  return out;
}

ordered_json timing_to_json(const ExperimentResult& result) {
  ordered_json runs = ordered_json::array();
  double total = 0.0;
  for (const RunMetrics& m : result.runs) {
    runs.push_back({{"method", m.method}, {"seed", m.seed}, {"seconds", m.seconds}});
    total += m.seconds;
  }
  ordered_json out;
  out["total_seconds"] = total;
  out["runs"] = runs;
  return out;
}

std::vector<std::string> write_experiment(const ExperimentResult& result,
                                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(out_dir) / name).string();
    atomic_write(path, content);
    written.push_back(path);
  };
  for (const RunMetrics& m : result.runs)
    if (m.trace) put(trace_file_name(m.method, m.seed), trace_to_csv(*m.trace));
  put("report.json", report_to_json(result).dump(2) + "\n");
  put("timing.json", timing_to_json(result).dump(2) + "\n");
  return written;
}

OutputFormat output_format_from_string(const std::string& s) {
  if (s == "json") return OutputFormat::json;
  if (s == "csv") return OutputFormat::csv;
  throw ConfigError("unknown format '" + s + "' (expected json or csv)");
}

namespace {

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"J_real",         "J_model",
                                                 "ood_state_rate", "tv_model_vs_real",
                                                 "tv_synth_vs_offline", "mean_q_eval"};
  return names;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

}  // namespace

std::string aggregate_reports(const std::vector<nlohmann::json>& reports, OutputFormat format) {
  // (env, method) -> metric -> values, in first-seen order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> groups;
  std::map<std::pair<std::string, std::string>, std::set<std::uint64_t>> seeds;
  for (const nlohmann::json& rep : reports) {
    if (!rep.is_object() || !rep.contains("env") || !rep.contains("runs"))
      throw ConfigError("not a report document (missing env or runs)");
    const std::string env = rep.at("env").get<std::string>();
    for (const auto& run : rep.at("runs")) {
      const std::pair<std::string, std::string> key{env, run.at("method").get<std::string>()};
      if (!groups.count(key)) order.push_back(key);
      auto& g = groups[key];
      for (const std::string& name : metric_names()) {
        const auto& v = run.at("metrics").at(name);
        g[name].push_back(v.is_null() ? std::nan("") : v.get<double>());
      }
      seeds[key].insert(run.at("seed").get<std::uint64_t>());
    }
  }
  auto stats = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return std::pair<double, double>{mean, sd};
  };

  if (format == OutputFormat::csv) {
    std::string out = "env,method,n_runs,n_seeds";
    for (const std::string& name : metric_names()) out += "," + name + "_mean," + name + "_std";
    out += "\n";
    for (const auto& key : order) {
      const auto& g = groups[key];
      out += key.first + "," + key.second + "," + std::to_string(g.at("J_real").size()) + "," +
             std::to_string(seeds[key].size());
      for (const std::string& name : metric_names()) {
        const auto [mean, sd] = stats(g.at(name));
        out += "," + fmt(mean) + "," + fmt(sd);
      }
      out += "\n";
    }
    return out;
  }
  ordered_json rows = ordered_json::array();
  for (const auto& key : order) {
    const auto& g = groups[key];
    ordered_json metrics;
    for (const std::string& name : metric_names()) {
      const auto [mean, sd] = stats(g.at(name));
      metrics[name] = {{"mean", mean}, {"std", sd}};
    }
    ordered_json row;
    row["env"] = key.first;
    row["method"] = key.second;
    row["n_runs"] = g.at("J_real").size();
    row["n_seeds"] = seeds[key].size();
    row["metrics"] = metrics;
    rows.push_back(row);
  }
  return ordered_json{{"rows", rows}}.dump(2) + "\n";
}

int cmd_run(const std::string& config_path, const RunOverrides& overrides,
            const std::string& out_dir, std::ostream& log) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (overrides.seed) cfg.seeds = {*overrides.seed};
  if (overrides.baseline) {
    const BaselineKind kind = baseline_from_string(*overrides.baseline);
    cfg.methods = {to_string(kind)};
  }
  if (overrides.lambda_u) cfg.lambda_u = *overrides.lambda_u;
  cfg.validate();
  const ExperimentResult result = run_experiment(cfg);
  for (const std::string& path : write_experiment(result, out_dir.empty() ? "." : out_dir))
    log << "wrote " << path << "\n";
  for (const RunMetrics& m : result.runs)
    log << m.method << " seed " << m.seed << ": J_real " << fmt(m.j_real) << ", J_model "
        << fmt(m.j_model) << ", start action a" << (m.start_action + 1) << "\n";
  return 0;
}

int cmd_verify(const std::string& suite, const VerifyOptions& opts, const std::string& out_dir,
               std::ostream& out) {
  const std::vector<SuiteResult> results = run_verify(suite, opts);
  const std::string doc = verify_to_json(results, opts).dump(2) + "\n";
  bool ok = true;
  for (const SuiteResult& r : results) ok = ok && r.passed();
  if (out_dir.empty()) {
    out << doc;
  } else {
    const std::string path = (std::filesystem::path(out_dir) / "verify.json").string();
    atomic_write(path, doc);
    for (const SuiteResult& r : results)
      out << (r.passed() ? "ok   " : "FAIL ") << r.suite << " (" << r.assertions - r.failures
          << "/" << r.expected_assertions << ")\n";
    out << "wrote " << path << "\n";
  }
  return ok ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& patterns, OutputFormat format,
               const std::string& out_dir, std::ostream& out) {
  std::vector<std::string> paths;
  for (const std::string& pattern : patterns) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
    globfree(&g);
  }
  std::sort(paths.begin(), paths.end());
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  if (paths.empty()) throw ConfigError("no files matched the report pattern(s)");
  std::vector<nlohmann::json> docs;
  for (const std::string& p : paths) {
    try {
      docs.push_back(nlohmann::json::parse(read_file(p)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(p + ": " + e.what());
    }
  }
  std::string table;
  try {
    table = aggregate_reports(docs, format);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  if (out_dir.empty()) {
    out << table;
  } else {
    const std::string name = format == OutputFormat::csv ? "summary.csv" : "summary.json";
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    atomic_write(path, table);
    out << "wrote " << path << "\n";
  }
  return 0;
}

}  // namespace damo
