#include <cmath>

#include "damo/baselines.hpp"
#include "damo/envs.hpp"
#include "damo/errors.hpp"
#include "damo/experiment.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace damo;

namespace {

// Two states; a0 at s0 pays 1 and stays, a1 pays 2 and moves to s1, which
// pays nothing forever.
TabularMDP two_choice() {
  TabularMDP m;
  m.n_states = 2;
  m.n_actions = 2;
  m.discount = 0.9;
  m.initial_dist = {1.0, 0.0};
  m.transition = SasTable(2, 2);
  m.reward = SasTable(2, 2);
  m.transition(0, 0, 0) = 1.0;
  m.reward(0, 0, 0) = 1.0;
  m.transition(0, 1, 1) = 1.0;
  m.reward(0, 1, 1) = 2.0;
  m.transition(1, 0, 1) = 1.0;
  m.transition(1, 1, 1) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("behavior cloning counts") {
  TransitionDataset ds;
  ds.n_states = 3;
  ds.n_actions = 2;
  ds.transitions = {{0, 0, 0.0, 1}, {0, 0, 0.0, 1}, {0, 0, 0.0, 1}, {0, 1, 0.0, 2}, {1, 1, 0.0, 0}};
  const StochasticPolicy pi = behavior_cloning(ds, 3, 2, 0.0);
  CHECK(pi(0, 0) == doctest::Approx(0.75));
  CHECK(pi(0, 1) == doctest::Approx(0.25));
  CHECK(pi(1, 1) == 1.0);
  CHECK(pi(2, 0) == 0.5);  // never observed
  const StochasticPolicy smooth = behavior_cloning(ds, 3, 2, 1.0);
  CHECK(smooth(0, 0) == doctest::Approx(4.0 / 6.0));
  CHECK(smooth(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("behavior cloning recovers the behavior policy on a large buffer") {
  const EnvInstance env = build_env("random-mdp", {}, 3);
  const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, 400, 100, 1);
  const StochasticPolicy pi = behavior_cloning(ds, env.mdp.n_states, env.mdp.n_actions, 0.0);
  CHECK(testing::max_abs_diff(pi.probs().data(), env.behavior.probs().data()) < 0.02);
}

TEST_CASE("value iteration hand values") {
  const TabularMDP m = two_choice();
  const ValueIterationResult vi = value_iteration(m, nullptr);
  // Staying is worth 1 / (1 - 0.9) = 10, leaving only 2.
  CHECK(vi.q(0, 0) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(vi.q(0, 1) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(vi.residual <= 1e-10);
  CHECK(plan_on_model(m, nullptr).argmax(0) == 0);

  SaTable penalty(2, 2);
  penalty(0, 0) = 0.95;  // stay now nets 0.05 per step: 0.5 total
  CHECK(plan_on_model(m, &penalty).argmax(0) == 1);
}

TEST_CASE("value iteration is a fixed point of the optimality operator") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const TabularMDP m = random_tabular_mdp(rng, 2 + trial % 5, 2 + trial % 3, 0.9, 0.3);
    const ValueIterationResult vi = value_iteration(m, nullptr);
    const StochasticPolicy g = greedy_policy(vi.q.q);
    // Evaluating the greedy policy reproduces Q* up to the 1e-9 tie mass.
    const QFunction qg = policy_evaluation(m, g);
    CHECK(testing::max_abs_diff(qg.q.data(), vi.q.q.data()) < 1e-6);
    // No policy beats it at any state.
    const StochasticPolicy other = random_policy(rng, m.n_states, m.n_actions);
    const QFunction qo = policy_evaluation(m, other);
    for (std::size_t i = 0; i < qo.q.size(); ++i) CHECK(qo.q.data()[i] <= vi.q.q.data()[i] + 1e-8);
  }
}

TEST_CASE("greedy policy splits ties") {
  SaTable q(1, 3);
  q(0, 0) = 1.0;
  q(0, 1) = 1.0;
  q(0, 2) = 0.0;
  const StochasticPolicy g = greedy_policy(q);
  CHECK(g(0, 0) == doctest::Approx(0.5));
  CHECK(g(0, 1) == doctest::Approx(0.5));
  CHECK(g(0, 2) == doctest::Approx(1e-9));
}

TEST_CASE("mopo penalty scales disagreement") {
  const EnvInstance env = build_env("random-mdp", {}, 0);
  const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, 5, 20, 2);
  const ModelEnsemble ens = ensemble_fit(ds, env.mdp.n_states, env.mdp.n_actions, 7, 5, 0.2, 4,
                                         0.0, UnseenPolicy::uniform);
  const SaTable d = disagreement_table(ens);
  const SaTable p = mopo_penalty(ens, 2.5);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(p.data()[i] == doctest::Approx(2.5 * d.data()[i]));
  const SaTable zero = mopo_penalty(ens, 0.0);
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("baseline names") {
  for (const char* name : {"bc", "naive-mb", "mopo-style"})
    CHECK(to_string(baseline_from_string(name)) == name);
  CHECK_THROWS_AS(baseline_from_string("cql"), ConfigError);
}

TEST_CASE("naive-mb follows the hallucinated road") {
  const EnvInstance env = build_env("three-road");
  ExperimentConfig cfg;
  cfg.env = "three-road";
  cfg.solver.unseen_reward = 3.0;
  const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, env.n_episodes, env.horizon, 0);
  const RunMetrics naive = run_method("naive-mb", env, ds, cfg, 0);
  CHECK(naive.start_action == 1);
  CHECK(naive.j_model > naive.j_real);
  const RunMetrics bc = run_method("bc", env, ds, cfg, 0);
  CHECK(bc.start_action == 0);
  CHECK(bc.ood_state_rate == 0.0);
}

TEST_CASE("ood rate of the cloned behavior shrinks with data") {
  const EnvInstance env = build_env("shift-gridworld");
  ExperimentConfig cfg;
  cfg.env = "shift-gridworld";
  double small = 0.0, large = 0.0;
  for (int n : {1, 200}) {
    const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, n, 20, 7);
    const double rate = run_method("bc", env, ds, cfg, 0).ood_state_rate;
    (n == 1 ? small : large) = rate;
  }
  CHECK(large <= small);
  CHECK(large < 1e-3);
}
