#include <cmath>

#include "damo/dataset.hpp"
#include "damo/envs.hpp"
#include "damo/model.hpp"
#include "doctest.h"

using namespace damo;

namespace {

TransitionDataset two_obs() {
  TransitionDataset ds;
  ds.n_states = 2;
  ds.n_actions = 1;
  ds.transitions = {{0, 0, 1.0, 1}, {0, 0, 1.0, 1}};
  return ds;
}

// Every (s, a, s') with positive probability, replicated in proportion to an
// integer weight so that counts / row_count reproduce the kernel exactly.
TransitionDataset enumerate(const TabularMDP& m, const int weights[]) {
  TransitionDataset ds;
  ds.n_states = m.n_states;
  ds.n_actions = m.n_actions;
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      for (int sp = 0; sp < m.n_states; ++sp)
        for (int k = 0; k < weights[(s * m.n_actions + a) * m.n_states + sp]; ++k)
          ds.transitions.push_back({s, a, m.reward(s, a, sp), sp});
  return ds;
}

}  // namespace

TEST_CASE("fit_model smoothing") {
  const TabularModel m0 = fit_model(two_obs(), 2, 1, 0.0, UnseenPolicy::uniform);
  CHECK(m0.probs(0, 0, 1) == 1.0);
  CHECK(m0.reward_hat(0, 0, 1) == 1.0);
  const TabularModel m5 = fit_model(two_obs(), 2, 1, 0.5, UnseenPolicy::uniform);
  CHECK(m5.probs(0, 0, 1) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(m5.probs(0, 0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  // s1 is never a source state.
  CHECK_FALSE(m5.seen(1, 0));
  CHECK(m5.probs(1, 0, 0) == 0.5);

  const TabularModel loop = fit_model(two_obs(), 2, 1, 0.5, UnseenPolicy::self_loop);
  CHECK(loop.probs(1, 0, 1) == 1.0);
  CHECK(loop.probs(1, 0, 0) == 0.0);

  const TabularModel empty = fit_model(TransitionDataset{}, 3, 2, 0.0, UnseenPolicy::uniform);
  for (double p : empty.probs.data()) CHECK(p == doctest::Approx(1.0 / 3.0));
  const TabularModel fallback = fit_model(TransitionDataset{}, 3, 2, 0.0, UnseenPolicy::uniform, 2.5);
  CHECK(fallback.reward_hat(1, 1, 2) == 2.5);
}

TEST_CASE("model rows") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const EnvInstance env = build_env("random-mdp", {}, trial);
    const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, 3, 10, trial);
    const double eps = trial % 2 ? 0.0 : 0.1 * (1 + trial);
    const TabularModel m = fit_model(ds, env.mdp.n_states, env.mdp.n_actions, eps,
                                     trial % 3 ? UnseenPolicy::uniform : UnseenPolicy::self_loop);
    for (int s = 0; s < m.n_states; ++s)
      for (int a = 0; a < m.n_actions; ++a) {
        double z = 0.0;
        for (int sp = 0; sp < m.n_states; ++sp) {
          z += m.probs(s, a, sp);
          if (eps > 0.0 && m.seen(s, a)) CHECK(m.probs(s, a, sp) > 0.0);
          if (m.seen(s, a))
            CHECK(m.probs(s, a, sp) ==
                  doctest::Approx((m.counts(s, a, sp) + eps) / (m.row_count(s, a) + m.n_states * eps)));
        }
        CHECK(std::abs(z - 1.0) <= 1e-12);
      }
  }
}

TEST_CASE("exhaustive data reproduces the kernel") {
  // Kernel with probabilities in multiples of 1/4.
  TabularMDP mdp(3, 2, 0.9);
  const int w[] = {4, 0, 0, 1, 3, 0, 2, 1, 1, 0, 0, 4, 1, 1, 2, 0, 2, 2};
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sp = 0; sp < 3; ++sp) {
        mdp.transition(s, a, sp) = w[(s * 2 + a) * 3 + sp] / 4.0;
        mdp.reward(s, a, sp) = 0.1 * (s + 2 * a + 3 * sp);
      }
  mdp.initial_dist = {0.5, 0.25, 0.25};
  const TabularModel m = fit_model(enumerate(mdp, w), 3, 2, 0.0, UnseenPolicy::uniform);
  CHECK(m.probs == mdp.transition);

  const TabularMDP learned = model_as_mdp(m, mdp.initial_dist, mdp.discount);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int sp = 0; sp < 3; ++sp)
        if (mdp.transition(s, a, sp) > 0.0)
          CHECK(learned.reward(s, a, sp) == doctest::Approx(mdp.reward(s, a, sp)).epsilon(1e-14));

  const TabularMDP perfect = model_as_mdp(m, mdp.initial_dist, mdp.discount, RewardSource::true_reward,
                                          &mdp.reward);
  CHECK(perfect == mdp);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const StochasticPolicy pi = random_policy(rng, 3, 2);
    CHECK(transition_occupancy(perfect, pi).rho == transition_occupancy(mdp, pi).rho);
  }
}

TEST_CASE("biased model has positive kl for some policy") {
  TabularMDP real(2, 1, 0.9);
  real.transition(0, 0, 1) = 1.0;
  real.transition(1, 0, 0) = 1.0;
  real.initial_dist = {1.0, 0.0};
  TransitionDataset ds;
  ds.transitions = {{0, 0, 0.0, 1}, {1, 0, 0.0, 0}, {1, 0, 0.0, 1}};
  const TabularModel m = fit_model(ds, 2, 1, 0.0, UnseenPolicy::uniform);
  const TabularMDP biased = model_as_mdp(m, real.initial_dist, real.discount);
  const StochasticPolicy pi = StochasticPolicy::uniform(2, 1);
  const double kl = kl_divergence(transition_occupancy(real, pi).values(),
                                  transition_occupancy(biased, pi).values());
  CHECK(kl > 0.0);
}

TEST_CASE("rollout_synthetic") {
  TabularModel det = fit_model(two_obs(), 2, 1, 0.0, UnseenPolicy::self_loop);
  const StochasticPolicy pi = StochasticPolicy::uniform(2, 1);
  const TransitionDataset one = rollout_synthetic(det, pi, {0, 1, 0}, 1, 5);
  REQUIRE(one.size() == 3);
  CHECK(one.transitions[0].sp == 1);
  CHECK(one.transitions[1].sp == 1);
  CHECK(one.transitions[2].sp == 1);
  CHECK(one.source == Source::synthetic);
  CHECK(one.horizon == 1);

  const EnvInstance env = build_env("random-mdp", {}, 9);
  const TabularModel m = fit_model(collect_dataset(env.mdp, env.behavior, 50, 50, 1), env.mdp.n_states,
                                   env.mdp.n_actions, 0.1, UnseenPolicy::uniform);
  const std::vector<int> starts(2000, 0);
  const TransitionDataset a = rollout_synthetic(m, env.behavior, starts, 4, 3);
  CHECK(a.size() == 8000);
  CHECK(a == rollout_synthetic(m, env.behavior, starts, 4, 3));
}

TEST_CASE("rollouts follow the model rows") {
  // Pearson chi-square per (s, a) row with 1e5 draws each.
  const EnvInstance env = build_env("random-mdp", {{"n_states", 4}, {"n_actions", 2}}, 5);
  const TabularModel m = fit_model(collect_dataset(env.mdp, env.behavior, 20, 30, 1), 4, 2, 0.3,
                                   UnseenPolicy::uniform);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 2; ++a) {
      const int acts[] = {a, a, a, a};
      const StochasticPolicy pi = StochasticPolicy::deterministic(acts, 2);
      const TransitionDataset ds =
          rollout_synthetic(m, pi, std::vector<int>(100000, s), 1, 100 + s * 2 + a);
      std::vector<double> counts(4, 0.0);
      for (const Transition& t : ds.transitions) counts[t.sp] += 1.0;
      double chi2 = 0.0;
      int dof = -1;
      for (int sp = 0; sp < 4; ++sp) {
        const double expected = 1e5 * m.probs(s, a, sp);
        if (expected == 0.0) {
          CHECK(counts[sp] == 0.0);
          continue;
        }
        chi2 += (counts[sp] - expected) * (counts[sp] - expected) / expected;
        ++dof;
      }
      // 0.99 quantiles of chi-square with 1..3 degrees of freedom.
      const double crit[] = {0.0, 6.635, 9.210, 11.345};
      CHECK(chi2 < crit[dof]);
    }
}

TEST_CASE("start states") {
  const EnvInstance env = build_env("random-mdp", {}, 2);
  const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, 5, 5, 1);
  const DatasetStats st = dataset_stats(ds);
  for (int s : branch_start_states(ds, 100, 3)) CHECK(st.covered_states.count(s) == 1);
  CHECK(branch_start_states(ds, 100, 3) == branch_start_states(ds, 100, 3));
  for (int s : initial_start_states({0.0, 1.0, 0.0}, 20, 1)) CHECK(s == 1);
}

TEST_CASE("ensemble") {
  const EnvInstance env = build_env("random-mdp", {}, 3);
  const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, 20, 20, 2);
  const ModelEnsemble ens = ensemble_fit(ds, env.mdp.n_states, env.mdp.n_actions, 7, 5, 0.2, 1, 0.0,
                                         UnseenPolicy::uniform);
  CHECK(ens.members.size() == 7);
  CHECK(ens.elite_ids.size() == 5);
  // Elites have the highest held-out log-likelihood.
  double worst_elite = INFINITY;
  for (int id : ens.elite_ids) worst_elite = std::min(worst_elite, ens.holdout_loglik[id]);
  for (int i = 0; i < 7; ++i)
    if (std::find(ens.elite_ids.begin(), ens.elite_ids.end(), i) == ens.elite_ids.end())
      CHECK(ens.holdout_loglik[i] <= worst_elite);
  const SaTable dis = disagreement_table(ens);
  for (double v : dis.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-12);
  }

  ModelEnsemble same = ens;
  for (TabularModel& m : same.members) m = ens.members[0];
  for (int s = 0; s < env.mdp.n_states; ++s)
    for (int a = 0; a < env.mdp.n_actions; ++a) CHECK(disagreement(same, s, a) == 0.0);

  // A pair observed once disappears from some bootstrap resamples, where the
  // row falls back to uniform.
  TransitionDataset rare;
  for (int i = 0; i < 200; ++i) rare.transitions.push_back({0, 0, 0.0, 0});
  rare.transitions.push_back({1, 0, 0.0, 0});
  const ModelEnsemble r = ensemble_fit(rare, 3, 1, 7, 7, 0.0, 11, 0.0, UnseenPolicy::uniform);
  CHECK(disagreement(r, 1, 0) > 0.5);
  CHECK(disagreement(r, 0, 0) == 0.0);
}

TEST_CASE("model json") {
  const EnvInstance env = build_env("random-mdp", {}, 3);
  const TabularModel m = fit_model(collect_dataset(env.mdp, env.behavior, 5, 5, 1), env.mdp.n_states,
                                   env.mdp.n_actions, 0.2, UnseenPolicy::self_loop, 1.5);
  const TabularModel back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  CHECK(back.probs == m.probs);
  CHECK(back.reward_hat == m.reward_hat);
  CHECK(model_hash(back) == model_hash(m));
}
