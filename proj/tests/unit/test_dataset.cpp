#include <cmath>

#include "damo/dataset.hpp"
#include "damo/envs.hpp"
#include "damo/errors.hpp"
#include "damo/serialize.hpp"
#include "doctest.h"

using namespace damo;

TEST_CASE("collect_dataset") {
  const EnvInstance loop = self_loop();
  CHECK(collect_dataset(loop.mdp, loop.behavior, 0, 5, 1).empty());

  const TransitionDataset three = collect_dataset(loop.mdp, loop.behavior, 1, 3, 1);
  REQUIRE(three.size() == 3);
  for (const Transition& t : three.transitions) CHECK(t == Transition{0, 0, 1.0, 0});
  CHECK(three.source == Source::offline);
  CHECK(three.env_hash == env_hash(loop.mdp));
  CHECK(three.horizon == 3);
  CHECK(three.initial_labels);

  const EnvInstance env = build_env("random-mdp", {}, 4);
  const TransitionDataset a = collect_dataset(env.mdp, env.behavior, 30, 20, 77);
  const TransitionDataset b = collect_dataset(env.mdp, env.behavior, 30, 20, 77);
  const TransitionDataset c = collect_dataset(env.mdp, env.behavior, 30, 20, 78);
  CHECK(a.size() == 600);
  CHECK(write_jsonl(a) == write_jsonl(b));
  CHECK(write_jsonl(a) != write_jsonl(c));
  // Episodes are contiguous: each record continues from the previous s'.
  for (std::size_t i = 1; i < a.size(); ++i)
    if (i % 20 != 0) CHECK(a.transitions[i].s == a.transitions[i - 1].sp);
}

TEST_CASE("discounted frequencies approach the occupancy") {
  const EnvInstance env = build_env("random-mdp", {}, 12);
  const TransitionDataset ds = collect_dataset(env.mdp, env.behavior, 4000, 150, 3);
  const SasTable emp = discounted_empirical_occupancy(ds, env.mdp.n_states, env.mdp.n_actions,
                                                      env.mdp.discount);
  const OccupancyMeasure exact = transition_occupancy(env.mdp, env.behavior);
  double tv = 0.0;
  for (std::size_t i = 0; i < emp.size(); ++i) tv += std::abs(emp.data()[i] - exact.values()[i]);
  CHECK(emp.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(0.5 * tv < 0.03);
}

TEST_CASE("dataset_stats") {
  TransitionDataset empty;
  const DatasetStats e = dataset_stats(empty);
  CHECK(e.n == 0);
  CHECK(e.covered_sa.empty());
  CHECK(e.covered_sas.empty());

  TransitionDataset one;
  one.n_states = 3;
  one.n_actions = 2;
  one.transitions = {{0, 1, 0.5, 2}};
  const DatasetStats s = dataset_stats(one);
  CHECK(s.n == 1);
  CHECK(s.covered_sa == std::set<std::pair<int, int>>{{0, 1}});
  CHECK(s.covered_sas.size() == 1);

  // Deterministic behavior covers one action per visited state.
  const EnvInstance env = build_env("random-mdp", {}, 2);
  std::vector<int> acts(env.mdp.n_states);
  for (int st = 0; st < env.mdp.n_states; ++st) acts[st] = env.behavior.argmax(st);
  const StochasticPolicy det = StochasticPolicy::deterministic(acts, env.mdp.n_actions);
  const DatasetStats d = dataset_stats(collect_dataset(env.mdp, det, 20, 30, 5));
  CHECK(d.covered_sa.size() == d.covered_states.size());

  // Labelled starts come from the first record of each episode.
  const EnvInstance grid = shift_gridworld();
  const DatasetStats g = dataset_stats(collect_dataset(grid.mdp, grid.behavior, 5, 10, 1));
  CHECK(g.empirical_initial[grid_state(1, 1)] == 1.0);
}

TEST_CASE("coverage is monotone under concatenation") {
  const EnvInstance env = build_env("random-mdp", {}, 6);
  TransitionDataset acc = collect_dataset(env.mdp, env.behavior, 1, 5, 0);
  for (int i = 1; i < 20; ++i) {
    const std::size_t before = dataset_stats(acc).covered_sa.size();
    acc = concatenate(acc, collect_dataset(env.mdp, env.behavior, 1, 5, i));
    CHECK(dataset_stats(acc).covered_sa.size() >= before);
  }
}

TEST_CASE("jsonl round trip") {
  Rng rng(10);
  TransitionDataset ds;
  ds.n_states = 9;
  ds.n_actions = 4;
  ds.env_hash = sha256_hex("x");
  ds.source = Source::synthetic;
  for (int i = 0; i < 1000; ++i)
    ds.transitions.push_back({rng.below(9), rng.below(4), rng.uniform() * 10.0 - 5.0, rng.below(9)});
  CHECK(read_jsonl(write_jsonl(ds)) == ds);

  TransitionDataset header_only = ds;
  header_only.transitions.clear();
  const TransitionDataset back = read_jsonl(write_jsonl(header_only));
  CHECK(back.empty());
  CHECK(back.env_hash == ds.env_hash);

  CHECK_THROWS_AS(read_jsonl(""), MalformedLine);
  try {
    read_jsonl("");
  } catch (const MalformedLine& e) {
    CHECK(e.line() == 1);
  }

  std::string text = write_jsonl(ds);
  const auto first = text.find('\n');
  const auto second = text.find('\n', first + 1);
  text.replace(first + 1, second - first - 1, "{\"s\": 0, \"a\": 1}");
  try {
    read_jsonl(text);
    FAIL("expected MalformedLine");
  } catch (const MalformedLine& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_jsonl(write_jsonl(header_only) + "{\"s\":99,\"a\":0,\"r\":0,\"sp\":0}\n"),
                  MalformedLine);
  CHECK_THROWS_AS(read_jsonl("not json\n"), MalformedLine);
}

TEST_CASE("mixed_batch") {
  const EnvInstance env = build_env("random-mdp", {}, 1);
  const TransitionDataset d_r = collect_dataset(env.mdp, env.behavior, 10, 10, 1);
  TransitionDataset d_m = collect_dataset(env.mdp, env.behavior, 10, 10, 2);
  d_m.source = Source::synthetic;
  for (Transition& t : d_m.transitions) t.r = -7.0;  // tag synthetic records

  auto count_offline = [](const TransitionDataset& b) {
    int n = 0;
    for (const Transition& t : b.transitions) n += t.r != -7.0;
    return n;
  };
  const TransitionDataset all = mixed_batch(d_r, d_m, 1.0, 50, 3);
  CHECK(all.size() == 50);
  CHECK(count_offline(all) == 50);

  const TransitionDataset mix = mixed_batch(d_r, d_m, 0.05, 256, 3);
  CHECK(mix.size() == 256);
  CHECK(count_offline(mix) == 13);
  CHECK(mix.source == Source::mixed);
  CHECK(count_offline(mixed_batch(d_r, d_m, 0.5, 2, 3)) == 1);
  CHECK(mixed_batch(d_r, d_m, 0.05, 256, 3) == mix);

  CHECK_THROWS_AS(mixed_batch(TransitionDataset{}, d_m, 0.5, 10, 0), EmptySource);
  CHECK_THROWS_AS(mixed_batch(d_r, TransitionDataset{}, 0.5, 10, 0), EmptySource);
  CHECK_NOTHROW(mixed_batch(TransitionDataset{}, d_m, 0.0, 10, 0));
}
