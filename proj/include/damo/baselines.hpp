#pragma once

#include <string>

#include "damo/dataset.hpp"
#include "damo/mdp.hpp"
#include "damo/model.hpp"

namespace damo {

enum class BaselineKind { bc, naive_mb, mopo_style };
std::string to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);

// pi(a|s) = (n(s, a) + eps) / (n(s) + |A| eps); unseen states uniform.
StochasticPolicy behavior_cloning(const TransitionDataset& d_r, int n_states, int n_actions,
                                  double smoothing);

struct ValueIterationResult {
  QFunction q;
  double residual = 0.0;
  int iterations = 0;
};

// Optimal Q for E_{s'~T}[r] - penalty(s, a), iterated until the max-norm
// change is below tol.
ValueIterationResult value_iteration(const TabularMDP& mdp, const SaTable* penalty,
                                     double tol = 1e-10);

// Greedy policy of value_iteration: 1 - 1e-9 on the argmax set split evenly,
// the rest split evenly over the other actions.
StochasticPolicy plan_on_model(const TabularMDP& model_mdp, const SaTable* penalty);
StochasticPolicy greedy_policy(const SaTable& q);

// lambda * disagreement(s, a).
SaTable mopo_penalty(const ModelEnsemble& ens, double lambda_u);

}  // namespace damo
