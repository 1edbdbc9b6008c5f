#pragma once

#include <cmath>
#include <vector>

#include "damo/envs.hpp"
#include "damo/mdp.hpp"
#include "damo/rng.hpp"

namespace testing {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Rollout-sum oracle: (1 - gamma) sum_t gamma^t P(s_t, a_t, s_{t+1}),
// propagated as a distribution for `horizon` steps.
inline damo::SasTable truncated_occupancy(const damo::TabularMDP& m,
                                          const damo::StochasticPolicy& pi, int horizon) {
  damo::SasTable rho(m.n_states, m.n_actions);
  std::vector<double> p = m.initial_dist;
  double w = 1.0 - m.discount;
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> next(p.size(), 0.0);
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a)
        for (int sp = 0; sp < m.n_states; ++sp) {
          const double x = p[s] * pi(s, a) * m.transition(s, a, sp);
          rho(s, a, sp) += w * x;
          next[sp] += x;
        }
    p = next;
    w *= m.discount;
  }
  return rho;
}

inline damo::SaTable random_q(damo::Rng& rng, int ns, int na, double scale = 2.0) {
  damo::SaTable q(ns, na);
  for (double& v : q.data()) v = scale * (2.0 * rng.uniform() - 1.0);
  return q;
}

}  // namespace testing
