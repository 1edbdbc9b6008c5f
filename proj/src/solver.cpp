#include "damo/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "damo/errors.hpp"
#include "damo/rng.hpp"

namespace damo {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Built-in conjugates have the form
//   alpha f_star(phi / alpha) = c (phi - alpha k)_+ + kappa (phi - alpha k)_+^{3/2}
// with kappa = 2/3 alpha^{-1/2}; linear is f_star(y) = y.
struct ConjShape {
  bool known = false;
  bool linear = false;
  double kink = 0.0;
  double lin_coef = 0.0;
};

ConjShape shape_of(const FGenerator& gen) {
  if (gen.name == "cubic") return {true, false, 0.0, 1.0};
  if (gen.name == "cubic-paper-literal") return {true, false, 1.0, 0.0};
  if (gen.name == "linear") return {true, true, 0.0, 0.0};
  return {};
}

TabularMDP with_initial(const TabularMDP& mdp, const std::vector<double>& mu0) {
  if (mdp.initial_dist == mu0) return mdp;
  TabularMDP out = mdp;
  out.initial_dist = mu0;
  return out;
}

double max_abs(const SaTable& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

struct InnerEval {
  double value = 0.0;
  SaTable grad;
};

// Exact inner objective and its gradient (right derivative of f_star at a
// kink). rho is rho_M^pi.
InnerEval eval_inner(const SaTable& q, const StochasticPolicy& policy, const TabularMDP& model,
                     const std::vector<double>& mu0, const SasTable& rho,
                     const SasTable& log_ratio, double alpha, const FGenerator& gen) {
  const int ns = model.n_states;
  const int na = model.n_actions;
  const double g = model.discount;
  const SasTable ph = phi(q, policy, model.reward, log_ratio, alpha, g);
  InnerEval ev;
  ev.grad = SaTable(ns, na);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      const double b = (1.0 - g) * mu0[s] * policy(s, a);
      ev.value += b * q(s, a);
      ev.grad(s, a) += b;
    }
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      for (int sp = 0; sp < ns; ++sp) {
        const double w = rho(s, a, sp);
        if (w == 0.0) continue;
        const double y = ph(s, a, sp) / alpha;
        const double d1 = gen.f_star_prime(y);
        ev.value += w * alpha * gen.f_star(y);
        ev.grad(s, a) -= w * d1;
        for (int ap = 0; ap < na; ++ap) ev.grad(sp, ap) += w * d1 * g * policy(sp, ap);
      }
  return ev;
}

// min_Q (1 - gamma) E_{mu0, pi}[Q] + sum_k rho_k h(u_k(Q)) with
// u_k = Phi_k - alpha k and h(u) = c u_+ + kappa u_+^{3/2}, written as
//   min c'Q + sum_k rho_k (c t_k + kappa t_k^{3/2})  s.t.  t_k >= u_k, t_k >= 0
// and solved by a primal log-barrier method. The barrier terms carry the
// weights rho_k, so the duality gap at the central point is 2 mu.
struct BarrierCell {
  int sa;  // s * na + a
  int sp;
  double rho;
  double b;  // r - alpha lr - alpha k
};

SaTable barrier_minimize(SaTable q, const StochasticPolicy& policy, const TabularMDP& model,
                         const std::vector<double>& mu0, const SasTable& rho,
                         const SasTable& log_ratio, double alpha, const ConjShape& sh,
                         double tol) {
  const int ns = model.n_states;
  const int na = model.n_actions;
  const int n = ns * na;
  const double g = model.discount;
  const double c = sh.lin_coef;
  const double kappa = 2.0 / 3.0 / std::sqrt(alpha);

  std::vector<BarrierCell> cells;
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      for (int sp = 0; sp < ns; ++sp) {
        const double w = rho(s, a, sp);
        if (w <= 0.0) continue;
        cells.push_back({s * na + a, sp, w,
                         model.reward(s, a, sp) - alpha * log_ratio(s, a, sp) - alpha * sh.kink});
      }
  const std::size_t m = cells.size();
  Eigen::VectorXd lin(n);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) lin(s * na + a) = (1.0 - g) * mu0[s] * policy(s, a);

  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(q.data().data(), n);
  // a_k . Q = Q(s, a) - gamma sum_a' pi(a'|s') Q(s', a'), so u_k = b_k - a_k . Q.
  auto a_dot = [&](const BarrierCell& k, const Eigen::VectorXd& v) {
    double out = v(k.sa);
    for (int ap = 0; ap < na; ++ap) out -= g * policy(k.sp, ap) * v(k.sp * na + ap);
    return out;
  };
  auto gt = [&](double t) { return c * t + kappa * t * std::sqrt(t); };

  Eigen::VectorXd t(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < m; ++k) t(k) = std::max(cells[k].b - a_dot(cells[k], x), 0.0) + 1.0;

  auto barrier = [&](const Eigen::VectorXd& xq, const Eigen::VectorXd& tt, double mu) -> double {
    double v = lin.dot(xq);
    for (std::size_t k = 0; k < m; ++k) {
      const double sk = tt(k) - cells[k].b + a_dot(cells[k], xq);
      if (!(sk > 0.0) || !(tt(k) > 0.0)) return INFINITY;
      v += cells[k].rho * (gt(tt(k)) - mu * std::log(sk) - mu * std::log(tt(k)));
    }
    return v;
  };

  std::vector<double> sv(m), gtk(m), htt(m), hqt(m);
  std::vector<int> idx(static_cast<std::size_t>(na + 1));
  std::vector<double> coef(static_cast<std::size_t>(na + 1));
  const double mu_final = std::max(1e-13, 0.5 * tol * 1e-3);
  for (double mu = 1.0;; mu *= 0.1) {
    const double mu_eff = std::max(mu, mu_final);
    for (int it = 0; it < 100; ++it) {
      Eigen::VectorXd gq = lin;
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
      for (std::size_t k = 0; k < m; ++k) {
        const BarrierCell& cell = cells[k];
        const double tk = t(k);
        const double sk = tk - cell.b + a_dot(cell, x);
        sv[k] = sk;
        const double rt = std::sqrt(tk);
        const double g1 = c + 1.5 * kappa * rt;
        const double g2 = 0.75 * kappa / rt;
        const double p = mu_eff / (sk * sk);
        gtk[k] = cell.rho * (g1 - mu_eff / sk - mu_eff / tk);
        htt[k] = cell.rho * (g2 + p + mu_eff / (tk * tk));
        hqt[k] = cell.rho * p;
        // Q block keeps rho p a a' minus the t elimination term.
        const double wq = cell.rho * p - hqt[k] * hqt[k] / htt[k];
        // Reduced gradient: -rho mu / s a - hqt a gt / htt.
        const double gcoef = -cell.rho * mu_eff / sk - hqt[k] * gtk[k] / htt[k];
        idx[0] = cell.sa;
        coef[0] = 1.0;
        for (int ap = 0; ap < na; ++ap) {
          idx[ap + 1] = cell.sp * na + ap;
          coef[ap + 1] = -g * policy(cell.sp, ap);
        }
        for (int i = 0; i <= na; ++i) {
          gq(idx[i]) += gcoef * coef[i];
          for (int j = 0; j <= na; ++j) h(idx[i], idx[j]) += wq * coef[i] * coef[j];
        }
      }
      const double scale = std::max(1.0, h.diagonal().maxCoeff());
      h.diagonal().array() += 1e-14 * scale;
      const Eigen::VectorXd dx = -h.ldlt().solve(gq);
      Eigen::VectorXd dt(static_cast<Eigen::Index>(m));
      for (std::size_t k = 0; k < m; ++k) dt(k) = -(gtk[k] + hqt[k] * a_dot(cells[k], dx)) / htt[k];

      // Newton decrement from the full (Q, t) system.
      Eigen::VectorXd gfull_q = lin;
      double dec = 0.0;
      {
        for (std::size_t k = 0; k < m; ++k) {
          const BarrierCell& cell = cells[k];
          const double w = -cell.rho * mu_eff / sv[k];
          gfull_q(cell.sa) += w;
          for (int ap = 0; ap < na; ++ap) gfull_q(cell.sp * na + ap) -= w * g * policy(cell.sp, ap);
          dec -= gtk[k] * dt(k);
        }
        dec -= gfull_q.dot(dx);
      }
      // Intermediate levels only need to be near the central path; the last
      // one stops at the rounding floor of the decrement.
      const double dec_tol = mu_eff <= mu_final ? 1e-14 : 0.1 * mu_eff;
      if (dec <= dec_tol || !std::isfinite(dec)) break;

      double step = 1.0;
      for (std::size_t k = 0; k < m; ++k) {
        const double ds = dt(k) + a_dot(cells[k], dx);
        if (ds < 0.0) step = std::min(step, -0.99 * sv[k] / ds);
        if (dt(k) < 0.0) step = std::min(step, -0.99 * t(k) / dt(k));
      }
      const double b0 = barrier(x, t, mu_eff);
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd xn = x + step * dx;
        const Eigen::VectorXd tn = t + step * dt;
        const double b1 = barrier(xn, tn, mu_eff);
        if (b1 <= b0 - 0.25 * step * dec ||
            (std::isfinite(b1) && std::abs(b1 - b0) <= 1e-15 * (1.0 + std::abs(b0)))) {
          x = xn;
          t = tn;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (mu_eff <= mu_final) break;
  }
  for (int i = 0; i < n; ++i) q.data()[i] = x(i);
  return q;
}

void guard(const SaTable& q, double bound) {
  const double m = max_abs(q);
  if (!(m <= bound))
    throw DivergenceError("inner solve diverged: |Q| = " + std::to_string(m) + " exceeds " +
                          std::to_string(bound));
}

void add_entropy_gradient(SaTable& grad, const StochasticPolicy& policy, double coef,
                          const std::vector<double>& weights) {
  if (coef == 0.0) return;
  for (int s = 0; s < policy.n_states(); ++s) {
    double h = 0.0;
    for (int a = 0; a < policy.n_actions(); ++a) {
      const double p = policy(s, a);
      if (p > 0.0) h -= p * std::log(p);
    }
    for (int a = 0; a < policy.n_actions(); ++a) {
      const double p = policy(s, a);
      if (p > 0.0) grad(s, a) += coef * weights[s] * (-p * (std::log(p) + h));
    }
  }
}

double weighted_entropy(const StochasticPolicy& policy, const std::vector<double>& weights) {
  double total = 0.0;
  for (int s = 0; s < policy.n_states(); ++s)
    for (int a = 0; a < policy.n_actions(); ++a) {
      const double p = policy(s, a);
      if (p > 0.0) total -= weights[s] * p * std::log(p);
    }
  return total;
}

// Softmax chain rule: dJ/dlogit(s, a) = pi(a|s) (g(s, a) - sum_b pi(b|s) g(s, b)).
SaTable softmax_chain(const SaTable& g, const StochasticPolicy& policy) {
  SaTable out(g.n_states(), g.n_actions());
  for (int s = 0; s < g.n_states(); ++s) {
    double mean = 0.0;
    for (int a = 0; a < g.n_actions(); ++a) mean += policy(s, a) * g(s, a);
    for (int a = 0; a < g.n_actions(); ++a) out(s, a) = policy(s, a) * (g(s, a) - mean);
  }
  return out;
}

StochasticPolicy ascend(const StochasticPolicy& policy, const SaTable& grad, double step) {
  SaTable logits = policy.logits() ? *policy.logits() : SaTable(policy.n_states(), policy.n_actions());
  if (!policy.logits())
    for (int s = 0; s < policy.n_states(); ++s)
      for (int a = 0; a < policy.n_actions(); ++a)
        logits(s, a) = std::log(std::max(policy(s, a), 1e-300));
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] += step * grad.data()[i];
  return StochasticPolicy::from_logits(std::move(logits));
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void SolverConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid " + field + ": " + why);
  };
  if (!(alpha >= 0.0)) fail("alpha", "must be >= 0");
  generator_by_name(fgen_name);
  if (inner_steps < 1) fail("inner_steps", "must be >= 1");
  if (outer_steps < 1) fail("outer_steps", "must be >= 1");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (!(q_step_size > 0.0)) fail("q_step_size", "must be > 0");
  if (!(policy_step_size > 0.0)) fail("policy_step_size", "must be > 0");
  if (!(offline_ratio >= 0.0 && offline_ratio <= 1.0)) fail("offline_ratio", "must lie in [0, 1]");
  if (rollout_k < 1) fail("rollout_k", "must be >= 1");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef", "must be >= 0");
  if (!(discount > 0.0 && discount < 1.0)) fail("discount", "must lie in (0, 1)");
  if (!(clip >= 0.0)) fail("clip", "must be >= 0");
  if (!(smoothing >= 0.0)) fail("smoothing", "must be >= 0");
  if (n_rollouts < 1) fail("n_rollouts", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (classifier.steps < 1) fail("classifier_steps", "must be >= 1");
  if (!(classifier.step_size > 0.0)) fail("classifier_step_size", "must be > 0");
  if (!(classifier.balance > 0.0 && classifier.balance < 1.0))
    fail("classifier_balance", "must lie in (0, 1)");
  if (classifier.n_samples < 0) fail("classifier_samples", "must be >= 0");
  if (mode == SolveMode::exact && alpha == 0.0) fail("alpha", "exact mode divides by alpha");
  if (mode == SolveMode::sampled && alpha == 0.0) fail("alpha", "sampled mode divides by alpha");
}

std::string trace_to_csv(const TrainingTrace& trace) {
  std::string out = "epoch,inner_obj,surrogate,J_real,J_model,mean_q_eval,fp_residual\n";
  for (const TraceRecord& r : trace.records) {
    out += std::to_string(r.epoch);
    for (double v : {r.inner_obj, r.surrogate, r.j_real, r.j_model, r.mean_q_eval, r.fp_residual}) {
      out += ',';
      out += fmt(v);
    }
    out += '\n';
  }
  return out;
}

QFunction SolverState::critic() const {
  if (!q2) return q;
  QFunction out = q;
  for (std::size_t i = 0; i < out.q.size(); ++i)
    out.q.data()[i] = std::min(q.q.data()[i], q2->q.data()[i]);
  return out;
}

SolverContext make_context(const TransitionDataset& d_r, const SolverConfig& cfg) {
  if (d_r.empty()) throw EmptySource("solver: offline buffer is empty");
  int ns = d_r.n_states;
  int na = d_r.n_actions;
  if (ns <= 0 || na <= 0)
    for (const Transition& t : d_r.transitions) {
      ns = std::max(ns, std::max(t.s, t.sp) + 1);
      na = std::max(na, t.a + 1);
    }
  TransitionDataset ds = d_r;
  ds.n_states = ns;
  ds.n_actions = na;
  SolverContext ctx;
  ctx.model = fit_model(ds, ns, na, cfg.smoothing, cfg.unseen_policy, cfg.unseen_reward);
  const DatasetStats st = dataset_stats(ds);
  ctx.mu0 = st.empirical_initial;
  ctx.model_mdp = model_as_mdp(ctx.model, ctx.mu0, cfg.discount);
  ctx.state_weights.assign(static_cast<std::size_t>(ns), 0.0);
  for (const Transition& t : ds.transitions) ctx.state_weights[t.s] += 1.0 / ds.size();
  ctx.rho_beta = discounted_empirical_occupancy(ds, ns, na, cfg.discount);
  return ctx;
}

SasTable phi(const SaTable& q, const StochasticPolicy& policy, const SasTable& reward,
             const SasTable& log_ratio, double alpha, double gamma) {
  const int ns = q.n_states();
  const int na = q.n_actions();
  const std::vector<double> v = state_values(policy, q);
  SasTable out(ns, na);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      const auto r = reward.row(s, a);
      const auto lr = log_ratio.row(s, a);
      auto o = out.row(s, a);
      for (int sp = 0; sp < ns; ++sp) o[sp] = r[sp] - alpha * lr[sp] + gamma * v[sp] - q(s, a);
    }
  return out;
}

double inner_objective(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, const FGenerator& gen) {
  const SasTable rho = transition_occupancy(with_initial(model_mdp, mu0), policy).rho;
  return eval_inner(q, policy, model_mdp, mu0, rho, log_ratio, alpha, gen).value;
}

SaTable inner_gradient(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, const FGenerator& gen) {
  const SasTable rho = transition_occupancy(with_initial(model_mdp, mu0), policy).rho;
  return eval_inner(q, policy, model_mdp, mu0, rho, log_ratio, alpha, gen).grad;
}

double sampled_inner_objective(const SaTable& q, const StochasticPolicy& policy,
                               const TransitionDataset& batch, const std::vector<double>& mu0,
                               const SasTable& log_ratio, double alpha, double gamma,
                               const FGenerator& gen) {
  const std::vector<double> v = state_values(policy, q);
  double total = 0.0;
  for (int s = 0; s < q.n_states(); ++s) total += (1.0 - gamma) * mu0[s] * v[s];
  if (batch.empty()) return total;
  double acc = 0.0;
  for (const Transition& t : batch.transitions) {
    const double ph = t.r - alpha * log_ratio(t.s, t.a, t.sp) + gamma * v[t.sp] - q(t.s, t.a);
    acc += alpha * gen.f_star(ph / alpha);
  }
  return total + acc / static_cast<double>(batch.size());
}

SaTable sampled_inner_gradient(const SaTable& q, const StochasticPolicy& policy,
                               const TransitionDataset& batch, const std::vector<double>& mu0,
                               const SasTable& log_ratio, double alpha, double gamma,
                               const FGenerator& gen) {
  const int na = q.n_actions();
  const std::vector<double> v = state_values(policy, q);
  SaTable grad(q.n_states(), na);
  for (int s = 0; s < q.n_states(); ++s)
    for (int a = 0; a < na; ++a) grad(s, a) = (1.0 - gamma) * mu0[s] * policy(s, a);
  if (batch.empty()) return grad;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const Transition& t : batch.transitions) {
    const double ph = t.r - alpha * log_ratio(t.s, t.a, t.sp) + gamma * v[t.sp] - q(t.s, t.a);
    const double d1 = gen.f_star_prime(ph / alpha) * w;
    grad(t.s, t.a) -= d1;
    for (int ap = 0; ap < na; ++ap) grad(t.sp, ap) += d1 * gamma * policy(t.sp, ap);
  }
  return grad;
}

RefinedReward refined_reward(const SasTable& reward, const SasTable& log_ratio,
                             const SasTable& rho_t_pi, const SasTable& rho_m_pi, double alpha,
                             const FGenerator& gen) {
  const int ns = reward.n_states();
  const int na = reward.n_actions();
  RefinedReward out{SasTable(ns, na), SasTable(ns, na), SasTable(ns, na), 0};
  for (std::size_t i = 0; i < reward.size(); ++i) {
    const double ex = alpha * log_ratio.data()[i];
    double im = 0.0;
    const double m = rho_m_pi.data()[i];
    const double t = rho_t_pi.data()[i];
    if (m > 0.0)
      im = alpha * gen.f_prime(t / m);
    else if (t > 0.0)
      ++out.unsupported_cells;
    out.explicit_penalty.data()[i] = ex;
    out.implicit_penalty.data()[i] = im;
    out.total.data()[i] = reward.data()[i] - ex - im;
  }
  return out;
}

double fixed_point_residual(const SaTable& q, const StochasticPolicy& policy,
                            const TabularMDP& model_mdp, const SasTable& r_tilde) {
  const SaTable rbar = expected_reward(model_mdp, r_tilde);
  const QFunction next = bellman_backup(model_mdp, policy, QFunction(q));
  double worst = 0.0;
  for (int s = 0; s < q.n_states(); ++s)
    for (int a = 0; a < q.n_actions(); ++a)
      worst = std::max(worst, std::abs(q(s, a) - (rbar(s, a) + next(s, a))));
  return worst;
}

double divergence_bound(const TabularMDP& model_mdp, const SolverConfig& cfg) {
  double r_max = 0.0;
  for (double r : model_mdp.reward.data()) r_max = std::max(r_max, std::abs(r));
  const double horizon = 1.0 / (1.0 - model_mdp.discount);
  const double penalty = cfg.data_alignment ? cfg.alpha * cfg.clip : 0.0;
  return r_max * horizon + penalty * std::max(10.0, horizon) + 1.0;
}

QFunction solve_inner(const StochasticPolicy& policy, const TabularMDP& model_mdp,
                      const std::vector<double>& mu0, const SasTable& log_ratio,
                      const SolverConfig& cfg, const InnerOptions& opts, const QFunction* init) {
  const FGenerator gen = generator_by_name(cfg.fgen_name);
  const int ns = model_mdp.n_states;
  const int na = model_mdp.n_actions;

  if (opts.method == InnerMethod::fixed_point) {
    if (opts.r_tilde == nullptr) throw Error("solve_inner: fixed-point mode needs r_tilde");
    const SaTable rbar = expected_reward(model_mdp, *opts.r_tilde);
    QFunction q = init ? *init : QFunction(ns, na);
    for (int it = 0; it < 1000000; ++it) {
      const QFunction next = bellman_backup(model_mdp, policy, q);
      double delta = 0.0;
      for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) {
          const double v = rbar(s, a) + next(s, a);
          delta = std::max(delta, std::abs(v - q(s, a)));
          q(s, a) = v;
        }
      if (delta <= opts.tolerance * (1.0 - model_mdp.discount)) break;
    }
    return q;
  }

  const double bound = divergence_bound(model_mdp, cfg);
  const TabularMDP model = with_initial(model_mdp, mu0);
  const SasTable rho = transition_occupancy(model, policy).rho;

  if (opts.method == InnerMethod::newton) {
    SaTable start(ns, na);
    if (init) {
      start = init->q;
    } else {
      // Policy evaluation of r - alpha lr under the model; the exact answer
      // when f_star is linear.
      SasTable shaped = model_mdp.reward;
      for (std::size_t i = 0; i < shaped.size(); ++i)
        shaped.data()[i] -= cfg.alpha * log_ratio.data()[i];
      start = policy_evaluation(model_mdp, policy, expected_reward(model_mdp, shaped)).q;
    }
    if (shape_of(gen).linear) {
      guard(start, bound);
      return QFunction(start);
    }
    const ConjShape sh = shape_of(gen);
    if (!sh.known) throw Error("solve_inner: newton mode supports the built-in generators only");
    SaTable q = barrier_minimize(std::move(start), policy, model, mu0, rho, log_ratio, cfg.alpha, sh,
                                 opts.tolerance);
    guard(q, bound);
    return QFunction(std::move(q));
  }

  // Diagonally preconditioned descent: each cell's step is scaled by its
  // model occupancy so rarely visited cells still move.
  SaTable q = init ? init->q : SaTable(ns, na);
  const SaTable d = [&] {
    SaTable t(ns, na);
    for (int s = 0; s < ns; ++s)
      for (int a = 0; a < na; ++a)
        for (double v : rho.row(s, a)) t(s, a) += v;
    return t;
  }();
  for (int step = 0; step < opts.gradient_steps; ++step) {
    const SaTable g =
        eval_inner(q, policy, model, mu0, rho, log_ratio, cfg.alpha, gen).grad;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double dv = d.data()[i];
      if (dv > 0.0) q.data()[i] -= opts.step_size * g.data()[i] / dv;
    }
    guard(q, bound);
  }
  return QFunction(std::move(q));
}

double actor_objective(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, double alpha_actor,
                       const FGenerator& gen, double entropy_coef,
                       const std::vector<double>& state_weights) {
  const TabularMDP model = with_initial(model_mdp, mu0);
  const SasTable rho = transition_occupancy(model, policy).rho;
  const SasTable ph = phi(q, policy, model.reward, log_ratio, alpha, model.discount);
  const std::vector<double> v = state_values(policy, q);
  double total = 0.0;
  for (int s = 0; s < model.n_states; ++s) total += (1.0 - model.discount) * mu0[s] * v[s];
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho.data()[i] != 0.0)
      total += rho.data()[i] * alpha_actor * gen.f_star(ph.data()[i] / alpha_actor);
  if (entropy_coef != 0.0) total += entropy_coef * weighted_entropy(policy, state_weights);
  return total;
}

SaTable outer_gradient(const SaTable& q, const StochasticPolicy& policy,
                       const TabularMDP& model_mdp, const std::vector<double>& mu0,
                       const SasTable& log_ratio, double alpha, double alpha_actor,
                       const FGenerator& gen, double entropy_coef,
                       const std::vector<double>& state_weights) {
  const int ns = model_mdp.n_states;
  const int na = model_mdp.n_actions;
  const double g = model_mdp.discount;
  const TabularMDP model = with_initial(model_mdp, mu0);
  const SaTable d = state_action_occupancy(model, policy);
  const SasTable ph = phi(q, policy, model.reward, log_ratio, alpha, g);

  // c(s, a) = E_{s'~M}[alpha_actor f_star(Phi / alpha_actor)] and the
  // incoming weight of f_star' at each next state.
  SaTable c(ns, na);
  std::vector<double> inflow(static_cast<std::size_t>(ns), 0.0);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      const auto m = model.transition.row(s, a);
      for (int sp = 0; sp < ns; ++sp) {
        if (m[sp] == 0.0) continue;
        const double y = ph(s, a, sp) / alpha_actor;
        c(s, a) += m[sp] * alpha_actor * gen.f_star(y);
        inflow[sp] += d(s, a) * m[sp] * gen.f_star_prime(y);
      }
    }
  const QFunction qc = policy_evaluation(model, policy, c);
  std::vector<double> ds(static_cast<std::size_t>(ns), 0.0);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) ds[s] += d(s, a);

  SaTable dpi(ns, na);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      dpi(s, a) = (1.0 - g) * mu0[s] * q(s, a) + ds[s] * qc(s, a) + g * q(s, a) * inflow[s];
  SaTable grad = softmax_chain(dpi, policy);
  add_entropy_gradient(grad, policy, entropy_coef, state_weights);
  return grad;
}

SaTable sampled_outer_gradient(const SaTable& q, const StochasticPolicy& policy,
                               const TransitionDataset& batch, const std::vector<double>& mu0,
                               const SasTable& log_ratio, double alpha, double alpha_actor,
                               double gamma, const FGenerator& gen, double entropy_coef,
                               const std::vector<double>& state_weights) {
  const int ns = q.n_states();
  const int na = q.n_actions();
  const std::vector<double> v = state_values(policy, q);
  std::vector<double> inflow(static_cast<std::size_t>(ns), 0.0);
  const double w = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  for (const Transition& t : batch.transitions) {
    const double ph = t.r - alpha * log_ratio(t.s, t.a, t.sp) + gamma * v[t.sp] - q(t.s, t.a);
    inflow[t.sp] += w * gen.f_star_prime(ph / alpha_actor);
  }
  SaTable dpi(ns, na);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a)
      dpi(s, a) = (1.0 - gamma) * mu0[s] * q(s, a) + gamma * q(s, a) * inflow[s];
  SaTable grad = softmax_chain(dpi, policy);
  add_entropy_gradient(grad, policy, entropy_coef, state_weights);
  return grad;
}

SolverState outer_policy_step(const SolverState& state, const SolverContext& ctx,
                              const SolverConfig& cfg, const TransitionDataset* batch) {
  const FGenerator gen = generator_by_name(cfg.fgen_name);
  const double alpha_actor = cfg.fixed_alpha_actor ? 1.0 : cfg.alpha;
  const QFunction q = state.critic();
  SaTable grad;
  if (cfg.mode == SolveMode::exact) {
    grad = outer_gradient(q.q, state.policy, ctx.model_mdp, ctx.mu0, state.log_ratio.values,
                          cfg.alpha, alpha_actor, gen, cfg.entropy_coef, ctx.state_weights);
  } else {
    if (batch == nullptr) throw Error("outer_policy_step: sampled mode needs a batch");
    grad = sampled_outer_gradient(q.q, state.policy, *batch, ctx.mu0, state.log_ratio.values,
                                  cfg.alpha, alpha_actor, cfg.discount, gen, cfg.entropy_coef,
                                  ctx.state_weights);
  }
  SolverState next = state;
  next.policy = ascend(state.policy, grad, cfg.policy_step_size);
  return next;
}

double inconsistent_objective(const SaTable& q, const StochasticPolicy& policy,
                              double entropy_coef, const std::vector<double>& state_weights) {
  const std::vector<double> v = state_values(policy, q);
  double total = 0.0;
  for (int s = 0; s < q.n_states(); ++s) total += state_weights[s] * v[s];
  if (entropy_coef != 0.0) total += entropy_coef * weighted_entropy(policy, state_weights);
  return total;
}

SaTable inconsistent_gradient(const SaTable& q, const StochasticPolicy& policy,
                              double entropy_coef, const std::vector<double>& state_weights) {
  SaTable g(q.n_states(), q.n_actions());
  for (int s = 0; s < q.n_states(); ++s)
    for (int a = 0; a < q.n_actions(); ++a) g(s, a) = state_weights[s] * q(s, a);
  SaTable grad = softmax_chain(g, policy);
  add_entropy_gradient(grad, policy, entropy_coef, state_weights);
  return grad;
}

SolverState inconsistent_policy_step(const SolverState& state, const SolverContext& ctx,
                                     const SolverConfig& cfg) {
  const SaTable grad =
      inconsistent_gradient(state.critic().q, state.policy, cfg.entropy_coef, ctx.state_weights);
  SolverState next = state;
  next.policy = ascend(state.policy, grad, cfg.policy_step_size);
  return next;
}

double surrogate_value(const StochasticPolicy& policy, const TabularMDP& mdp_real,
                       const TabularMDP& mdp_model, const SasTable& rho_t_beta, double alpha,
                       const FGenerator& gen) {
  const SasTable rt = transition_occupancy(mdp_real, policy).rho;
  double total = 0.0;
  if (alpha == 0.0) {
    for (std::size_t k = 0; k < rt.size(); ++k)
      if (rt.data()[k] != 0.0) total += rt.data()[k] * mdp_real.reward.data()[k];
    return total;
  }
  const SasTable rm = transition_occupancy(mdp_model, policy).rho;
  for (std::size_t k = 0; k < rt.size(); ++k) {
    const double t = rt.data()[k];
    if (t == 0.0) continue;
    const double m = rm.data()[k];
    const double b = rho_t_beta.data()[k];
    if (m <= 0.0 || b <= 0.0)
      throw SupportViolation("surrogate_value: rho_T^pi charges a cell outside the support of "
                             "rho_M^pi or rho^beta");
    total += t * (mdp_real.reward.data()[k] - alpha * std::log(m / b));
  }
  return total - alpha * f_divergence(rt.data(), rm.data(), gen);
}

MaximinResult solve_maximin(const TabularMDP* eval_mdp, const TransitionDataset& d_r,
                            const SolverConfig& cfg) {
  cfg.validate();
  const FGenerator gen = generator_by_name(cfg.fgen_name);
  MaximinResult res;
  res.context = make_context(d_r, cfg);
  const SolverContext& ctx = res.context;
  const int ns = ctx.model.n_states;
  const int na = ctx.model.n_actions;
  const double gamma = cfg.discount;

  SolverState& st = res.state;
  st.policy = StochasticPolicy::uniform(ns, na);
  st.q = QFunction(ns, na);
  if (cfg.mode == SolveMode::sampled && cfg.double_q) {
    Rng init_rng(derive_seed(cfg.seed, 1));
    QFunction q2(ns, na);
    for (double& v : st.q.q.data()) v = 0.01 * (2.0 * init_rng.uniform() - 1.0);
    for (double& v : q2.q.data()) v = 0.01 * (2.0 * init_rng.uniform() - 1.0);
    st.q2 = std::move(q2);
  }
  st.log_ratio = LogRatioTable{SasTable(ns, na), cfg.clip, cfg.ratio_mode};
  const double bound = divergence_bound(ctx.model_mdp, cfg);
  bool have_q = false;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    st.epoch = epoch;
    const std::uint64_t es = derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(epoch));

    const std::vector<int> starts =
        cfg.rollout_from_initial ? initial_start_states(ctx.mu0, cfg.n_rollouts, derive_seed(es, 10))
                                 : branch_start_states(d_r, cfg.n_rollouts, derive_seed(es, 10));
    const TransitionDataset d_m =
        rollout_synthetic(ctx.model, st.policy, starts, cfg.rollout_k, derive_seed(es, 11));

    if (!cfg.data_alignment) {
      st.log_ratio = LogRatioTable{SasTable(ns, na), cfg.clip, cfg.ratio_mode};
    } else if (cfg.ratio_mode == RatioMode::exact) {
      const SasTable rho_m = transition_occupancy(ctx.model_mdp, st.policy).rho;
      st.log_ratio = exact_log_ratio(rho_m, ctx.rho_beta, cfg.clip);
    } else {
      ClassifierConfig cc = cfg.classifier;
      cc.seed = derive_seed(es, 12);
      st.log_ratio = classifier_log_ratio(train_classifier(d_r, d_m, ns, na, cc), cfg.clip);
    }
    const SasTable& lr = st.log_ratio.values;

    TraceRecord rec;
    rec.epoch = epoch;
    TransitionDataset last_batch;
    if (cfg.mode == SolveMode::exact) {
      InnerOptions opts;
      opts.method = InnerMethod::newton;
      st.q = solve_inner(st.policy, ctx.model_mdp, ctx.mu0, lr, cfg, opts, have_q ? &st.q : nullptr);
      have_q = true;
      rec.inner_obj = inner_objective(st.q.q, st.policy, ctx.model_mdp, ctx.mu0, lr, cfg.alpha, gen);
    } else {
      const int n_tables = st.q2 ? 2 : 1;
      const bool linear_conj = shape_of(gen).linear;
      for (int k = 0; k < n_tables; ++k) {
        QFunction& qk = k == 0 ? st.q : *st.q2;
        for (int i = 0; i < cfg.inner_steps; ++i) {
          const TransitionDataset batch =
              mixed_batch(d_r, d_m, cfg.offline_ratio, cfg.batch_size,
                          derive_seed(es, 20 + static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)));
          if (linear_conj) {
            // f_star(y) = y makes the sampled objective linear in q; step on
            // the per-cell mean TD error instead.
            SaTable td(ns, na, 0.0);
            SaTable cnt(ns, na, 0.0);
            const std::vector<double> v = state_values(st.policy, qk.q);
            for (const Transition& t : batch.transitions) {
              td(t.s, t.a) += t.r - cfg.alpha * lr(t.s, t.a, t.sp) + gamma * v[t.sp] - qk(t.s, t.a);
              cnt(t.s, t.a) += 1.0;
            }
            for (int s = 0; s < ns; ++s)
              for (int a = 0; a < na; ++a)
                if (cnt(s, a) > 0.0) qk(s, a) += cfg.q_step_size * td(s, a) / cnt(s, a);
            guard(qk.q, bound);
            continue;
          }
          const SaTable g = sampled_inner_gradient(qk.q, st.policy, batch, ctx.mu0, lr, cfg.alpha,
                                                   gamma, gen);
          // Per-cell step normalized by the cell's share of the batch. Cells
          // absent from the batch only see the linear mu0 term, so they stay put.
          SaTable share(ns, na, 0.0);
          for (const Transition& t : batch.transitions) share(t.s, t.a) += 1.0 / batch.size();
          for (int s = 0; s < ns; ++s)
            for (int a = 0; a < na; ++a) {
              if (share(s, a) == 0.0) continue;
              const double norm = share(s, a) + (1.0 - gamma) * ctx.mu0[s] * st.policy(s, a);
              qk(s, a) -= cfg.q_step_size * g(s, a) / std::max(norm, 1e-3);
            }
          guard(qk.q, bound);
        }
      }
      last_batch = mixed_batch(d_r, d_m, cfg.offline_ratio, cfg.batch_size, derive_seed(es, 30));
      const QFunction qc = st.critic();
      rec.inner_obj = sampled_inner_objective(qc.q, st.policy, last_batch, ctx.mu0, lr, cfg.alpha,
                                              gamma, gen);
    }

    const QFunction qc = st.critic();
    const std::vector<double> v = state_values(st.policy, qc.q);
    rec.mean_q_eval = 0.0;
    for (int s = 0; s < ns; ++s) rec.mean_q_eval += ctx.mu0[s] * v[s];
    rec.j_model = policy_return(ctx.model_mdp, st.policy);
    if (eval_mdp != nullptr) {
      rec.j_real = policy_return(*eval_mdp, st.policy);
      TabularMDP model_eval = ctx.model_mdp;
      model_eval.initial_dist = eval_mdp->initial_dist;
      try {
        rec.surrogate = surrogate_value(st.policy, *eval_mdp, model_eval, ctx.rho_beta,
                                        cfg.alpha, gen);
      } catch (const SupportViolation&) {
        rec.surrogate = kNaN;
      }
      const RefinedReward rt = refined_reward(
          ctx.model_mdp.reward, lr, transition_occupancy(*eval_mdp, st.policy).rho,
          transition_occupancy(model_eval, st.policy).rho, cfg.alpha, gen);
      rec.fp_residual = fixed_point_residual(qc.q, st.policy, ctx.model_mdp, rt.total);
    } else {
      rec.j_real = kNaN;
      rec.surrogate = kNaN;
      rec.fp_residual = kNaN;
    }
    st.trace.records.push_back(rec);

    for (int o = 0; o < cfg.outer_steps; ++o) {
      if (cfg.policy_update == PolicyUpdate::inconsistent) {
        st = inconsistent_policy_step(st, ctx, cfg);
      } else if (cfg.mode == SolveMode::exact) {
        st = outer_policy_step(st, ctx, cfg);
      } else {
        const TransitionDataset batch = mixed_batch(d_r, d_m, cfg.offline_ratio, cfg.batch_size,
                                                    derive_seed(es, 40, static_cast<std::uint64_t>(o)));
        st = outer_policy_step(st, ctx, cfg, &batch);
      }
    }
  }
  st.epoch = cfg.epochs;
  return res;
}

}  // namespace damo
