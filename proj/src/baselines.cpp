#include "damo/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "damo/errors.hpp"

namespace damo {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::bc: return "bc";
    case BaselineKind::naive_mb: return "naive-mb";
    case BaselineKind::mopo_style: return "mopo-style";
  }
  return "bc";
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "bc") return BaselineKind::bc;
  if (s == "naive-mb") return BaselineKind::naive_mb;
  if (s == "mopo-style") return BaselineKind::mopo_style;
  throw ConfigError("unknown baseline '" + s + "' (expected bc, naive-mb or mopo-style)");
}

StochasticPolicy behavior_cloning(const TransitionDataset& d_r, int n_states, int n_actions,
                                  double smoothing) {
  SaTable counts(n_states, n_actions);
  for (const Transition& t : d_r.transitions) counts(t.s, t.a) += 1.0;
  SaTable probs(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    double n = 0.0;
    for (double c : counts.row(s)) n += c;
    const double denom = n + n_actions * smoothing;
    for (int a = 0; a < n_actions; ++a)
      probs(s, a) = denom > 0.0 ? (counts(s, a) + smoothing) / denom : 1.0 / n_actions;
  }
  return StochasticPolicy::from_probs(std::move(probs));
}

ValueIterationResult value_iteration(const TabularMDP& mdp, const SaTable* penalty, double tol) {
  const int ns = mdp.n_states;
  const int na = mdp.n_actions;
  SaTable rbar = expected_reward(mdp);
  if (penalty)
    for (std::size_t i = 0; i < rbar.size(); ++i) rbar.data()[i] -= penalty->data()[i];
  ValueIterationResult res;
  res.q = QFunction(ns, na);
  std::vector<double> v(static_cast<std::size_t>(ns), 0.0);
  for (res.iterations = 1; res.iterations <= 10000000; ++res.iterations) {
    for (int s = 0; s < ns; ++s)
      for (int a = 0; a < na; ++a) {
        double next = 0.0;
        const auto t = mdp.transition.row(s, a);
        for (int sp = 0; sp < ns; ++sp) next += t[sp] * v[sp];
        res.q(s, a) = rbar(s, a) + mdp.discount * next;
      }
    double delta = 0.0;
    for (int s = 0; s < ns; ++s) {
      const auto row = res.q.q.row(s);
      const double best = *std::max_element(row.begin(), row.end());
      delta = std::max(delta, std::abs(best - v[s]));
      v[s] = best;
    }
    res.residual = delta;
    if (delta <= tol) break;
  }
  return res;
}

StochasticPolicy greedy_policy(const SaTable& q) {
  const int na = q.n_actions();
  SaTable probs(q.n_states(), na);
  for (int s = 0; s < q.n_states(); ++s) {
    const auto row = q.row(s);
    const double best = *std::max_element(row.begin(), row.end());
    const double tie_tol = 1e-9 * std::max(1.0, std::abs(best));
    int n_best = 0;
    for (double v : row) n_best += best - v <= tie_tol;
    const int n_rest = na - n_best;
    const double top = n_rest > 0 ? (1.0 - 1e-9) / n_best : 1.0 / n_best;
    const double low = n_rest > 0 ? 1e-9 / n_rest : 0.0;
    for (int a = 0; a < na; ++a) probs(s, a) = best - row[a] <= tie_tol ? top : low;
  }
  return StochasticPolicy::from_probs(std::move(probs));
}

StochasticPolicy plan_on_model(const TabularMDP& model_mdp, const SaTable* penalty) {
  return greedy_policy(value_iteration(model_mdp, penalty).q.q);
}

SaTable mopo_penalty(const ModelEnsemble& ens, double lambda_u) {
  SaTable u = disagreement_table(ens);
  for (double& v : u.data()) v *= lambda_u;
  return u;
}

}  // namespace damo
