#include <cmath>

#include "damo/dataset.hpp"
#include "damo/envs.hpp"
#include "damo/errors.hpp"
#include "damo/model.hpp"
#include "damo/ratio.hpp"
#include "doctest.h"

using namespace damo;

namespace {

TransitionDataset repeat(std::initializer_list<std::pair<Transition, int>> cells) {
  TransitionDataset ds;
  for (const auto& [t, n] : cells)
    for (int i = 0; i < n; ++i) ds.transitions.push_back(t);
  return ds;
}

}  // namespace

TEST_CASE("exact_log_ratio") {
  SasTable a(2, 1), b(2, 1);
  a(0, 0, 0) = 0.5;
  a(0, 0, 1) = 0.5;
  b = a;
  const LogRatioTable same = exact_log_ratio(a, b, 10.0);
  for (double v : same.values.data()) CHECK(v == 0.0);

  SasTable m(2, 1);
  m(0, 0, 0) = 0.8;
  m(0, 0, 1) = 0.2;
  SasTable t(2, 1);
  t(0, 0, 0) = 0.4;
  t(0, 0, 1) = 0.6;
  const LogRatioTable lr = exact_log_ratio(m, t, 10.0);
  CHECK(lr.values(0, 0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(lr.mode == RatioMode::exact);

  SasTable only_m(2, 1);
  only_m(1, 0, 1) = 1.0;
  const LogRatioTable ood = exact_log_ratio(only_m, t, 10.0);
  CHECK(ood.values(1, 0, 1) == 10.0);
  CHECK(ood.values(0, 0, 0) == 0.0);  // rho_m = 0

  SasTable tiny(2, 1);
  tiny(0, 0, 0) = 1e-20;
  CHECK(exact_log_ratio(tiny, t, 10.0).values(0, 0, 0) == -10.0);
}

TEST_CASE("log ratio properties") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int ns = 2 + rng.below(6), na = 1 + rng.below(3);
    const TabularMDP m = random_tabular_mdp(rng, ns, na, 0.9, 0.3);
    const OccupancyMeasure p = transition_occupancy(m, random_policy(rng, ns, na));
    const OccupancyMeasure q = transition_occupancy(m, random_policy(rng, ns, na));
    const double clip = 1.0 + 5.0 * rng.uniform();
    const LogRatioTable pq = exact_log_ratio(p, q, clip);
    const LogRatioTable qp = exact_log_ratio(q, p, clip);
    for (std::size_t i = 0; i < pq.values.size(); ++i) {
      CHECK(std::abs(pq.values.data()[i]) <= clip);
      CHECK(std::isfinite(pq.values.data()[i]));
      if (p.values()[i] > 0.0 && q.values()[i] > 0.0)
        CHECK(pq.values.data()[i] == doctest::Approx(-qp.values.data()[i]).epsilon(1e-12));
    }
    CHECK(clip_log_ratio(clip_log_ratio(pq, 0.5), 0.5).values == clip_log_ratio(pq, 0.5).values);
  }
}

TEST_CASE("classifier closed forms") {
  const Transition x{0, 0, 0.0, 0};
  const Transition y{0, 0, 0.0, 1};
  ClassifierConfig cfg;

  SUBCASE("identical buffers") {
    const TransitionDataset d = repeat({{x, 30}, {y, 10}});
    const ClassifierParams p = train_classifier(d, d, 2, 1, cfg);
    CHECK(sigmoid(p.weights(0, 0, 0)) == doctest::Approx(0.5).epsilon(1e-12));
    const LogRatioTable lr = classifier_log_ratio(p, 10.0);
    for (double v : lr.values.data()) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("twice as frequent in the synthetic buffer") {
    // Empirical frequencies: D_M (2/3, 1/3), D_R (1/3, 2/3).
    const TransitionDataset d_r = repeat({{x, 10}, {y, 20}});
    const TransitionDataset d_m = repeat({{x, 40}, {y, 20}});
    const ClassifierParams p = train_classifier(d_r, d_m, 2, 1, cfg);
    CHECK(sigmoid(p.weights(0, 0, 0)) == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
    const LogRatioTable lr = classifier_log_ratio(p, 10.0);
    CHECK(lr.values(0, 0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
    CHECK(lr.values(0, 0, 1) == doctest::Approx(-std::log(2.0)).epsilon(1e-10));
    CHECK(lr.mode == RatioMode::classifier);
  }
  SUBCASE("unbalanced mix subtracts the prior log-odds") {
    const TransitionDataset d_r = repeat({{x, 10}, {y, 20}});
    const TransitionDataset d_m = repeat({{x, 40}, {y, 20}});
    cfg.balance = 0.8;
    const LogRatioTable lr = classifier_log_ratio(train_classifier(d_r, d_m, 2, 1, cfg), 10.0);
    CHECK(lr.values(0, 0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  }
  SUBCASE("cell only in the synthetic buffer") {
    const TransitionDataset d_r = repeat({{x, 10}});
    const TransitionDataset d_m = repeat({{x, 10}, {y, 10}});
    cfg.steps = 20;
    const ClassifierParams p = train_classifier(d_r, d_m, 2, 1, cfg);
    // Separable: the Newton step tends to 1 / h and is capped at 2.
    CHECK(p.weights(0, 0, 1) >= 20.0);
    CHECK(p.weights(0, 0, 1) <= 40.0);
    CHECK(classifier_log_ratio(p, 10.0).values(0, 0, 1) == 10.0);
  }
  SUBCASE("empty buffers") {
    CHECK_THROWS_AS(train_classifier(TransitionDataset{}, repeat({{x, 1}}), 2, 1, cfg), EmptySource);
    CHECK_THROWS_AS(train_classifier(repeat({{x, 1}}), TransitionDataset{}, 2, 1, cfg), EmptySource);
  }
}

TEST_CASE("classifier agrees with the exact empirical ratio") {
  const EnvInstance env = build_env("random-mdp", {}, 5);
  const int ns = env.mdp.n_states, na = env.mdp.n_actions;
  const TransitionDataset d_r = collect_dataset(env.mdp, env.behavior, 500, 100, 1);
  const TabularModel model = fit_model(d_r, ns, na, 0.1, UnseenPolicy::uniform);
  Rng rng(3);
  const StochasticPolicy pi = random_policy(rng, ns, na);
  const TransitionDataset d_m = rollout_synthetic(model, pi, branch_start_states(d_r, 10000, 2), 5, 4);
  const SasTable pm = empirical_distribution(d_m, ns, na);
  const SasTable pr = empirical_distribution(d_r, ns, na);
  const LogRatioTable oracle = exact_log_ratio(pm, pr, 10.0);

  SUBCASE("full buffers reach the Bayes optimum") {
    const LogRatioTable est = classifier_log_ratio(train_classifier(d_r, d_m, ns, na, {}), 10.0);
    for (std::size_t i = 0; i < pm.size(); ++i)
      if (pm.data()[i] > 0.0 && pr.data()[i] > 0.0)
        CHECK(std::abs(est.values.data()[i] - oracle.values.data()[i]) <= 1e-6);
  }
  SUBCASE("resampled training is close on frequent cells") {
    ClassifierConfig cfg;
    cfg.n_samples = 1000000;
    cfg.seed = 9;
    const LogRatioTable est = classifier_log_ratio(train_classifier(d_r, d_m, ns, na, cfg), 10.0);
    int checked = 0;
    for (std::size_t i = 0; i < pm.size(); ++i)
      if (pm.data()[i] > 0.01 && pr.data()[i] > 0.01) {
        CHECK(std::abs(est.values.data()[i] - oracle.values.data()[i]) <= 0.1);
        ++checked;
      }
    CHECK(checked > 5);
  }
}
