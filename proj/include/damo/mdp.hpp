#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "damo/table.hpp"

namespace damo {

// Finite discounted MDP (S, A, T, r, mu0, gamma). transition(s, a, s') is
// T(s'|s, a); reward(s, a, s') is r(s, a, s').
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  SasTable transition;
  SasTable reward;
  std::vector<double> initial_dist;
  double discount = 0.9;

  TabularMDP() = default;
  TabularMDP(int ns, int na, double gamma)
      : n_states(ns), n_actions(na), transition(ns, na), reward(ns, na),
        initial_dist(static_cast<std::size_t>(ns), 0.0), discount(gamma) {}

  bool operator==(const TabularMDP&) const = default;
};

struct ValidationEntry {
  enum class Severity { violation, warning };
  Severity severity;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;

  bool empty() const { return entries.empty(); }
  bool ok() const;  // no violations (warnings allowed)
  std::size_t violation_count() const;
  std::size_t warning_count() const;
};

// Never throws. Non-positive rewards are warnings: the r > 0 assumption is
// not needed by any of the checks built on top of this library.
ValidationReport validate_mdp(const TabularMDP& mdp);

class StochasticPolicy {
 public:
  StochasticPolicy() = default;

  // Throws Error when a row is not a probability vector (tolerance 1e-12).
  static StochasticPolicy from_probs(SaTable probs);
  // Row-wise softmax; keeps the logits.
  static StochasticPolicy from_logits(SaTable logits);
  static StochasticPolicy uniform(int n_states, int n_actions);
  static StochasticPolicy deterministic(std::span<const int> actions,
                                        int n_actions);

  int n_states() const { return probs_.n_states(); }
  int n_actions() const { return probs_.n_actions(); }
  double operator()(int s, int a) const { return probs_(s, a); }
  const SaTable& probs() const { return probs_; }
  const std::optional<SaTable>& logits() const { return logits_; }

  int argmax(int s) const;

  bool operator==(const StochasticPolicy&) const = default;

 private:
  SaTable probs_;
  std::optional<SaTable> logits_;
};

enum class Provenance { exact_linear_solve, monte_carlo };

// Normalized discounted distribution over transitions (s, a, s').
struct OccupancyMeasure {
  SasTable rho;
  Provenance provenance = Provenance::exact_linear_solve;

  double mass() const { return rho.sum(); }
  SaTable state_action() const;
  std::vector<double> state() const;
  std::span<const double> values() const { return rho.data(); }
};

struct QFunction {
  SaTable q;

  QFunction() = default;
  explicit QFunction(SaTable table) : q(std::move(table)) {}
  QFunction(int n_states, int n_actions, double fill = 0.0)
      : q(n_states, n_actions, fill) {}

  double operator()(int s, int a) const { return q(s, a); }
  double& operator()(int s, int a) { return q(s, a); }
  double max_abs() const;
};

// d(s, a) = (1 - gamma) mu0(s) pi(a|s) + gamma sum d(s~, a~) T(s|s~, a~) pi(a|s).
// Solved by dense LU in the state space; throws NumericalError when the
// state-action flow residual exceeds 1e-8.
SaTable state_action_occupancy(const TabularMDP& mdp,
                               const StochasticPolicy& policy);

// rho(s, a, s') = d(s, a) T(s'|s, a).
OccupancyMeasure transition_occupancy(const TabularMDP& mdp,
                                      const StochasticPolicy& policy);

// Max-norm residual of the state-action flow identity for a candidate d.
double flow_residual(const TabularMDP& mdp, const StochasticPolicy& policy,
                     const SaTable& d);

// Geometric-depth estimator: each sample draws s0 ~ mu0, depth
// t ~ Geometric(1 - gamma) truncated at horizon, rolls t steps and records
// the transition taken at depth t. Deterministic per seed.
OccupancyMeasure monte_carlo_occupancy(const TabularMDP& mdp,
                                       const StochasticPolicy& policy,
                                       std::int64_t n_samples, int horizon,
                                       std::uint64_t seed);

// E_{rho^pi_T}[r]. This is (1 - gamma) times the discounted return.
double policy_return(const TabularMDP& mdp, const StochasticPolicy& policy);
// E[sum_t gamma^t r_t] = policy_return / (1 - gamma).
double discounted_return(const TabularMDP& mdp, const StochasticPolicy& policy);

// r_bar(s, a) = sum_s' T(s'|s, a) r(s, a, s').
SaTable expected_reward(const TabularMDP& mdp);
SaTable expected_reward(const TabularMDP& mdp, const SasTable& reward);

// V(s) = sum_a pi(a|s) q(s, a).
std::vector<double> state_values(const StochasticPolicy& policy,
                                 const SaTable& q);

// (T^pi q)(s, a) = gamma sum_s' T(s'|s, a) sum_a' pi(a'|s') q(s', a').
QFunction bellman_backup(const TabularMDP& dynamics,
                         const StochasticPolicy& policy, const QFunction& q);

// Q = reward_sa + T^pi Q, solved exactly.
QFunction policy_evaluation(const TabularMDP& dynamics,
                            const StochasticPolicy& policy,
                            const SaTable& reward_sa);
QFunction policy_evaluation(const TabularMDP& dynamics,
                            const StochasticPolicy& policy);

// Natural-log KL; throws SupportViolation when p(x) > 0 = q(x).
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const OccupancyMeasure& p, const OccupancyMeasure& q);

double total_variation(std::span<const double> p, std::span<const double> q);
double total_variation(const OccupancyMeasure& p, const OccupancyMeasure& q);

}  // namespace damo
