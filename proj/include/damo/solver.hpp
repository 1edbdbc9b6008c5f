#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "damo/dataset.hpp"
#include "damo/fdiv.hpp"
#include "damo/mdp.hpp"
#include "damo/model.hpp"
#include "damo/ratio.hpp"

namespace damo {

enum class SolveMode { exact, sampled };
enum class PolicyUpdate { consistent, inconsistent };

struct SolverConfig {
  double alpha = 1.0;
  std::string fgen_name = "cubic";
  int inner_steps = 10;
  int outer_steps = 1;
  int epochs = 60;
  double q_step_size = 0.5;
  double policy_step_size = 5.0;
  bool fixed_alpha_actor = false;
  double offline_ratio = 0.05;
  int rollout_k = 5;
  RatioMode ratio_mode = RatioMode::exact;
  std::uint64_t seed = 0;
  bool double_q = false;
  double entropy_coef = 0.0;

  double discount = 0.9;
  SolveMode mode = SolveMode::exact;
  PolicyUpdate policy_update = PolicyUpdate::consistent;
  // false drops log(rho_M / rho_beta) from the objective.
  bool data_alignment = true;
  double clip = 10.0;
  double smoothing = 0.0;
  UnseenPolicy unseen_policy = UnseenPolicy::uniform;
  double unseen_reward = 0.0;
  int n_rollouts = 200;
  bool rollout_from_initial = false;
  int batch_size = 256;
  ClassifierConfig classifier;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct TraceRecord {
  int epoch = 0;
  double inner_obj = 0.0;
  // surrogate, j_real and fp_residual are NaN when no evaluation
  // environment is attached.
  double surrogate = 0.0;
  double j_real = 0.0;
  double j_model = 0.0;
  double mean_q_eval = 0.0;
  // max |Q - (E_M[r_tilde] + T^pi_M Q)| for the critic, with r_tilde built
  // from the evaluation environment's occupancy.
  double fp_residual = 0.0;
};

struct TrainingTrace {
  std::vector<TraceRecord> records;
};

std::string trace_to_csv(const TrainingTrace& trace);

struct SolverState {
  StochasticPolicy policy;
  QFunction q;
  std::optional<QFunction> q2;
  LogRatioTable log_ratio;
  int epoch = 0;
  TrainingTrace trace;

  // Elementwise min of the two tables when double Q is on.
  QFunction critic() const;
};

// Quantities the solver derives from the offline buffer alone.
struct SolverContext {
  TabularModel model;
  TabularMDP model_mdp;  // learned reward, estimated mu0
  std::vector<double> mu0;
  // Empirical state frequencies of the offline buffer.
  std::vector<double> state_weights;
  // Discount-weighted empirical occupancy of the offline buffer.
  SasTable rho_beta;
};

SolverContext make_context(const TransitionDataset& d_r, const SolverConfig& cfg);

// Phi(s, a, s') = r - alpha lr + gamma sum_a' pi(a'|s') q(s', a') - q(s, a).
SasTable phi(const SaTable& q, const StochasticPolicy& policy, const SasTable& reward,
             const SasTable& log_ratio, double alpha, double gamma);

// (1 - gamma) E_{mu0, pi}[q] + alpha E_{rho_M^pi}[f_star(Phi / alpha)] with
// exact expectations.
double inner_objective(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, const FGenerator& gen);
SaTable inner_gradient(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, const FGenerator& gen);

// Same objective with the f_star expectation taken over a batch.
double sampled_inner_objective(const SaTable& q, const StochasticPolicy& policy,
                               const TransitionDataset& batch, const std::vector<double>& mu0,
                               const SasTable& log_ratio, double alpha, double gamma,
                               const FGenerator& gen);
SaTable sampled_inner_gradient(const SaTable& q, const StochasticPolicy& policy,
                               const TransitionDataset& batch, const std::vector<double>& mu0,
                               const SasTable& log_ratio, double alpha, double gamma,
                               const FGenerator& gen);

// r_tilde = r - alpha lr - alpha f'(rho_T / rho_M), with the two penalties
// kept separately. Cells with rho_M = 0 get no implicit penalty and are
// counted in unsupported_cells.
struct RefinedReward {
  SasTable total;
  SasTable explicit_penalty;
  SasTable implicit_penalty;
  std::size_t unsupported_cells = 0;
};

RefinedReward refined_reward(const SasTable& reward, const SasTable& log_ratio,
                             const SasTable& rho_t_pi, const SasTable& rho_m_pi, double alpha,
                             const FGenerator& gen);

// max |Q - (E_{s'~M}[r_tilde] + T^pi_M Q)|.
double fixed_point_residual(const SaTable& q, const StochasticPolicy& policy,
                            const TabularMDP& model_mdp, const SasTable& r_tilde);

enum class InnerMethod { fixed_point, newton, gradient };

struct InnerOptions {
  InnerMethod method = InnerMethod::newton;
  int gradient_steps = 10;
  double step_size = 0.5;
  double tolerance = 1e-10;
  // Required by fixed_point: the refined reward.
  const SasTable* r_tilde = nullptr;
};

// fixed_point: iterate Q <- E_M[r_tilde] + T^pi_M Q to tolerance.
// newton: exact minimizer of the inner objective (log-barrier Newton on the
// epigraph of the f_star term; built-in generators only).
// gradient: gradient_steps descent steps from `init`.
// Throws DivergenceError when |Q| leaves the admissible bound.
QFunction solve_inner(const StochasticPolicy& policy, const TabularMDP& model_mdp,
                      const std::vector<double>& mu0, const SasTable& log_ratio,
                      const SolverConfig& cfg, const InnerOptions& opts,
                      const QFunction* init = nullptr);

double divergence_bound(const TabularMDP& model_mdp, const SolverConfig& cfg);

// Gradient of the maximin objective w.r.t. policy logits with q and the
// log-ratio held fixed. alpha_actor replaces alpha outside Phi.
// entropy_coef adds entropy weighted by state_weights.
SaTable outer_gradient(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, double alpha_actor,
                       const FGenerator& gen, double entropy_coef,
                       const std::vector<double>& state_weights);

// The actor objective that outer_gradient differentiates.
double actor_objective(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, double alpha_actor,
                       const FGenerator& gen, double entropy_coef,
                       const std::vector<double>& state_weights);

// Actor gradient with the f_star expectation taken over a batch; the
// dependence of the sampling distribution on pi is not differentiated.
SaTable sampled_outer_gradient(const SaTable& q, const StochasticPolicy& policy,
                               const TransitionDataset& batch, const std::vector<double>& mu0,
                               const SasTable& log_ratio, double alpha, double alpha_actor,
                               double gamma, const FGenerator& gen, double entropy_coef,
                               const std::vector<double>& state_weights);

// One ascent step on the logits. Exact mode uses outer_gradient; sampled mode
// needs a batch and uses sampled_outer_gradient.
SolverState outer_policy_step(const SolverState& state, const SolverContext& ctx,
                              const SolverConfig& cfg,
                              const TransitionDataset* batch = nullptr);

// sum_s w(s) [sum_a pi(a|s) q(s, a) + entropy_coef H(pi(.|s))].
double inconsistent_objective(const SaTable& q, const StochasticPolicy& policy,
                              double entropy_coef, const std::vector<double>& state_weights);
SaTable inconsistent_gradient(const SaTable& q, const StochasticPolicy& policy,
                              double entropy_coef, const std::vector<double>& state_weights);
SolverState inconsistent_policy_step(const SolverState& state, const SolverContext& ctx,
                                     const SolverConfig& cfg);

// E_{rho_T^pi}[r - alpha log(rho_M^pi / rho^beta)] - alpha D_f(rho_T^pi || rho_M^pi).
// Throws SupportViolation when rho_T^pi charges a cell where rho_M^pi or
// rho^beta vanishes.
double surrogate_value(const StochasticPolicy& policy, const TabularMDP& mdp_real,
                       const TabularMDP& mdp_model, const SasTable& rho_t_beta, double alpha,
                       const FGenerator& gen);

struct MaximinResult {
  SolverState state;
  SolverContext context;
};

// Algorithm loop: rollouts, ratio, inner solve, outer steps, trace. eval_mdp
// is read only for the J_real and surrogate trace columns.
MaximinResult solve_maximin(const TabularMDP* eval_mdp, const TransitionDataset& d_r,
                            const SolverConfig& cfg);

}  // namespace damo
