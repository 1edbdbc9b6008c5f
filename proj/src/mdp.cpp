#include "damo/mdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "damo/errors.hpp"
#include "damo/rng.hpp"

namespace damo {
namespace {

constexpr double kRowTol = 1e-12;

std::string cell(int s, int a) {
  return "(s" + std::to_string(s) + ",a" + std::to_string(a) + ")";
}

void softmax_row(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& p : out) p /= z;
}

// P_pi(s, s') = sum_a pi(a|s) T(s'|s, a).
Eigen::MatrixXd state_kernel(const TabularMDP& mdp,
                             const StochasticPolicy& policy) {
  const int n = mdp.n_states;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      const auto row = mdp.transition.row(s, a);
      for (int sp = 0; sp < n; ++sp) p(s, sp) += w * row[sp];
    }
  return p;
}

}  // namespace

bool ValidationReport::ok() const { return violation_count() == 0; }

std::size_t ValidationReport::violation_count() const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [](const ValidationEntry& e) {
        return e.severity == ValidationEntry::Severity::violation;
      }));
}

std::size_t ValidationReport::warning_count() const {
  return entries.size() - violation_count();
}

ValidationReport validate_mdp(const TabularMDP& mdp) {
  ValidationReport report;
  auto violation = [&](std::string msg) {
    report.entries.push_back({ValidationEntry::Severity::violation, std::move(msg)});
  };
  auto warning = [&](std::string msg) {
    report.entries.push_back({ValidationEntry::Severity::warning, std::move(msg)});
  };

  if (mdp.n_states <= 0) violation("n_states must be positive");
  if (mdp.n_actions <= 0) violation("n_actions must be positive");
  if (!(mdp.discount > 0.0 && mdp.discount < 1.0))
    violation("discount must lie in (0, 1)");
  if (!report.empty()) return report;

  if (mdp.transition.n_states() != mdp.n_states ||
      mdp.transition.n_actions() != mdp.n_actions)
    violation("transition table shape does not match (n_states, n_actions)");
  if (mdp.reward.n_states() != mdp.n_states ||
      mdp.reward.n_actions() != mdp.n_actions)
    violation("reward table shape does not match (n_states, n_actions)");
  if (mdp.initial_dist.size() != static_cast<std::size_t>(mdp.n_states))
    violation("initial_dist length does not match n_states");
  if (!report.empty()) return report;

  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      double total = 0.0;
      bool negative = false;
      for (double p : mdp.transition.row(s, a)) {
        total += p;
        negative = negative || p < 0.0 || !std::isfinite(p);
      }
      if (negative) violation("transition row " + cell(s, a) + " has a negative or non-finite entry");
      if (std::abs(total - 1.0) > kRowTol) {
        std::ostringstream os;
        os << "transition row " << cell(s, a) << " sums to " << total;
        violation(os.str());
      }
    }

  double mu_total = 0.0;
  bool mu_negative = false;
  for (double p : mdp.initial_dist) {
    mu_total += p;
    mu_negative = mu_negative || p < 0.0 || !std::isfinite(p);
  }
  if (mu_negative) violation("initial_dist has a negative or non-finite entry");
  if (std::abs(mu_total - 1.0) > kRowTol) violation("initial_dist does not sum to 1");

  std::size_t non_positive = 0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int sp = 0; sp < mdp.n_states; ++sp) {
        const double r = mdp.reward(s, a, sp);
        if (!std::isfinite(r))
          violation("reward " + cell(s, a) + "->s" + std::to_string(sp) + " is not finite");
        else if (r <= 0.0)
          ++non_positive;
      }
  if (non_positive > 0)
    warning(std::to_string(non_positive) +
            " reward entries are <= 0; the r(s,a,s') > 0 assumption is not met");
  return report;
}

StochasticPolicy StochasticPolicy::from_probs(SaTable probs) {
  for (int s = 0; s < probs.n_states(); ++s) {
    double total = 0.0;
    for (double p : probs.row(s)) {
      if (p < 0.0 || !std::isfinite(p))
        throw Error("policy row s" + std::to_string(s) + " has an invalid entry");
      total += p;
    }
    if (std::abs(total - 1.0) > kRowTol)
      throw Error("policy row s" + std::to_string(s) + " does not sum to 1");
  }
  StochasticPolicy pi;
  pi.probs_ = std::move(probs);
  return pi;
}

StochasticPolicy StochasticPolicy::from_logits(SaTable logits) {
  StochasticPolicy pi;
  pi.probs_ = SaTable(logits.n_states(), logits.n_actions());
  for (int s = 0; s < logits.n_states(); ++s) softmax_row(logits.row(s), pi.probs_.row(s));
  pi.logits_ = std::move(logits);
  return pi;
}

StochasticPolicy StochasticPolicy::uniform(int n_states, int n_actions) {
  return from_logits(SaTable(n_states, n_actions, 0.0));
}

StochasticPolicy StochasticPolicy::deterministic(std::span<const int> actions,
                                                int n_actions) {
  SaTable probs(static_cast<int>(actions.size()), n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) probs(static_cast<int>(s), actions[s]) = 1.0;
  return from_probs(std::move(probs));
}

int StochasticPolicy::argmax(int s) const {
  const auto row = probs_.row(s);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

SaTable OccupancyMeasure::state_action() const {
  SaTable d(rho.n_states(), rho.n_actions());
  for (int s = 0; s < rho.n_states(); ++s)
    for (int a = 0; a < rho.n_actions(); ++a)
      for (double v : rho.row(s, a)) d(s, a) += v;
  return d;
}

std::vector<double> OccupancyMeasure::state() const {
  std::vector<double> out(static_cast<std::size_t>(rho.n_states()), 0.0);
  const SaTable d = state_action();
  for (int s = 0; s < d.n_states(); ++s)
    for (double v : d.row(s)) out[s] += v;
  return out;
}

double QFunction::max_abs() const {
  double m = 0.0;
  for (double v : q.data()) m = std::max(m, std::abs(v));
  return m;
}

SaTable state_action_occupancy(const TabularMDP& mdp,
                               const StochasticPolicy& policy) {
  const int n = mdp.n_states;
  const double g = mdp.discount;
  const Eigen::MatrixXd p = state_kernel(mdp, policy);
  Eigen::VectorXd b(n);
  for (int s = 0; s < n; ++s) b(s) = (1.0 - g) * mdp.initial_dist[s];
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - g * p.transpose();
  const Eigen::VectorXd ds = lhs.partialPivLu().solve(b);

  SaTable d(n, mdp.n_actions);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) d(s, a) = std::max(0.0, ds(s)) * policy(s, a);

  const double residual = flow_residual(mdp, policy, d);
  if (!(residual <= 1e-8))
    throw NumericalError("occupancy solve residual " + std::to_string(residual));
  return d;
}

OccupancyMeasure transition_occupancy(const TabularMDP& mdp,
                                      const StochasticPolicy& policy) {
  const SaTable d = state_action_occupancy(mdp, policy);
  OccupancyMeasure occ{SasTable(mdp.n_states, mdp.n_actions), Provenance::exact_linear_solve};
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto row = mdp.transition.row(s, a);
      auto out = occ.rho.row(s, a);
      for (int sp = 0; sp < mdp.n_states; ++sp) out[sp] = d(s, a) * row[sp];
    }
  return occ;
}

double flow_residual(const TabularMDP& mdp, const StochasticPolicy& policy,
                     const SaTable& d) {
  const int n = mdp.n_states;
  const double g = mdp.discount;
  std::vector<double> inflow(static_cast<std::size_t>(n), 0.0);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (d(s, a) == 0.0) continue;
      const auto row = mdp.transition.row(s, a);
      for (int sp = 0; sp < n; ++sp) inflow[sp] += d(s, a) * row[sp];
    }
  double worst = 0.0;
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double rhs = ((1.0 - g) * mdp.initial_dist[s] + g * inflow[s]) * policy(s, a);
      worst = std::max(worst, std::abs(d(s, a) - rhs));
    }
  return worst;
}

namespace {

// Cumulative rows for repeated inverse-CDF draws.
struct CdfTable {
  int width = 0;
  std::vector<double> cdf;
  std::vector<int> last;  // last positive entry per row, for rounding

  CdfTable(std::span<const double> flat, int w) : width(w), cdf(flat.size()), last(flat.size() / w) {
    for (std::size_t r = 0; r < last.size(); ++r) {
      double acc = 0.0;
      for (int i = 0; i < w; ++i) {
        const double p = flat[r * w + i];
        acc += p;
        cdf[r * w + i] = acc;
        if (p > 0.0) last[r] = i;
      }
    }
  }

  int draw(std::size_t row, double u) const {
    const double* c = cdf.data() + row * width;
    const double x = u * c[width - 1];
    for (int i = 0; i < width; ++i)
      if (x < c[i]) return i;
    return last[row];
  }
};

}  // namespace

OccupancyMeasure monte_carlo_occupancy(const TabularMDP& mdp,
                                       const StochasticPolicy& policy,
                                       std::int64_t n_samples, int horizon,
                                       std::uint64_t seed) {
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  Rng rng(seed);
  const CdfTable init(mdp.initial_dist, ns);
  const CdfTable act(policy.probs().data(), na);
  const CdfTable next(mdp.transition.data(), ns);
  std::vector<double> counts(mdp.transition.size(), 0.0);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    int s = init.draw(0, rng.uniform());
    const int depth = rng.geometric(mdp.discount, horizon);
    for (int t = 0;; ++t) {
      const int a = act.draw(static_cast<std::size_t>(s), rng.uniform());
      const int sp = next.draw(static_cast<std::size_t>(s) * na + a, rng.uniform());
      if (t == depth) {
        counts[mdp.transition.index(s, a, sp)] += 1.0;
        break;
      }
      s = sp;
    }
  }
  OccupancyMeasure occ{SasTable(ns, na), Provenance::monte_carlo};
  const double inv = n_samples > 0 ? 1.0 / static_cast<double>(n_samples) : 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) occ.rho.data()[k] = counts[k] * inv;
  return occ;
}

double policy_return(const TabularMDP& mdp, const StochasticPolicy& policy) {
  const OccupancyMeasure occ = transition_occupancy(mdp, policy);
  double total = 0.0;
  for (std::size_t k = 0; k < occ.rho.size(); ++k)
    if (occ.rho.data()[k] != 0.0) total += occ.rho.data()[k] * mdp.reward.data()[k];
  return total;
}

double discounted_return(const TabularMDP& mdp, const StochasticPolicy& policy) {
  return policy_return(mdp, policy) / (1.0 - mdp.discount);
}

SaTable expected_reward(const TabularMDP& mdp) { return expected_reward(mdp, mdp.reward); }

SaTable expected_reward(const TabularMDP& mdp, const SasTable& reward) {
  SaTable out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto t = mdp.transition.row(s, a);
      const auto r = reward.row(s, a);
      double v = 0.0;
      for (int sp = 0; sp < mdp.n_states; ++sp) v += t[sp] * r[sp];
      out(s, a) = v;
    }
  return out;
}

std::vector<double> state_values(const StochasticPolicy& policy, const SaTable& q) {
  std::vector<double> v(static_cast<std::size_t>(q.n_states()), 0.0);
  for (int s = 0; s < q.n_states(); ++s)
    for (int a = 0; a < q.n_actions(); ++a) v[s] += policy(s, a) * q(s, a);
  return v;
}

QFunction bellman_backup(const TabularMDP& dynamics,
                         const StochasticPolicy& policy, const QFunction& q) {
  const std::vector<double> v = state_values(policy, q.q);
  QFunction out(dynamics.n_states, dynamics.n_actions);
  for (int s = 0; s < dynamics.n_states; ++s)
    for (int a = 0; a < dynamics.n_actions; ++a) {
      const auto t = dynamics.transition.row(s, a);
      double next = 0.0;
      for (int sp = 0; sp < dynamics.n_states; ++sp) next += t[sp] * v[sp];
      out(s, a) = dynamics.discount * next;
    }
  return out;
}

QFunction policy_evaluation(const TabularMDP& dynamics,
                            const StochasticPolicy& policy,
                            const SaTable& reward_sa) {
  const int n = dynamics.n_states;
  const double g = dynamics.discount;
  const Eigen::MatrixXd p = state_kernel(dynamics, policy);
  Eigen::VectorXd rpi = Eigen::VectorXd::Zero(n);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < dynamics.n_actions; ++a) rpi(s) += policy(s, a) * reward_sa(s, a);
  const Eigen::VectorXd v =
      (Eigen::MatrixXd::Identity(n, n) - g * p).partialPivLu().solve(rpi);

  QFunction q(n, dynamics.n_actions);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < dynamics.n_actions; ++a) {
      const auto t = dynamics.transition.row(s, a);
      double next = 0.0;
      for (int sp = 0; sp < n; ++sp) next += t[sp] * v(sp);
      q(s, a) = reward_sa(s, a) + g * next;
    }
  return q;
}

QFunction policy_evaluation(const TabularMDP& dynamics,
                            const StochasticPolicy& policy) {
  return policy_evaluation(dynamics, policy, expected_reward(dynamics));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("kl_divergence: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0)
      throw SupportViolation("kl_divergence: p > 0 where q = 0 at index " + std::to_string(i));
    total += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(0.0, total);
}

double kl_divergence(const OccupancyMeasure& p, const OccupancyMeasure& q) {
  return kl_divergence(p.values(), q.values());
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("total_variation: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return 0.5 * total;
}

double total_variation(const OccupancyMeasure& p, const OccupancyMeasure& q) {
  return total_variation(p.values(), q.values());
}

}  // namespace damo
