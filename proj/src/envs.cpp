#include "damo/envs.hpp"

#include <cmath>

#include "damo/errors.hpp"
#include "damo/rng.hpp"

namespace damo {
namespace {

double param(const EnvParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void check_keys(const std::string& env, const EnvParams& given, const EnvParams& defaults) {
  for (const auto& [k, v] : given)
    if (!defaults.count(k)) throw ConfigError("env '" + env + "' has no parameter '" + k + "'");
}

}  // namespace

std::vector<double> random_simplex(Rng& rng, int n, double sparsity) {
  std::vector<double> v(static_cast<std::size_t>(n));
  const int keep = rng.below(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool zero = i != keep && sparsity > 0.0 && rng.uniform() < sparsity;
    v[i] = zero ? 0.0 : 0.05 + rng.uniform();
    total += v[i];
  }
  for (double& x : v) x /= total;
  return v;
}

StochasticPolicy random_policy(Rng& rng, int n_states, int n_actions, double logit_scale) {
  SaTable logits(n_states, n_actions);
  for (double& w : logits.data()) w = logit_scale * (2.0 * rng.uniform() - 1.0);
  return StochasticPolicy::from_logits(std::move(logits));
}

TabularMDP random_tabular_mdp(Rng& rng, int n_states, int n_actions, double gamma,
                              double sparsity) {
  TabularMDP mdp(n_states, n_actions, gamma);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      const std::vector<double> row = random_simplex(rng, n_states, sparsity);
      for (int sp = 0; sp < n_states; ++sp) mdp.transition(s, a, sp) = row[sp];
      for (int sp = 0; sp < n_states; ++sp) mdp.reward(s, a, sp) = 1.0 - rng.uniform();
    }
  mdp.initial_dist = random_simplex(rng, n_states);
  return mdp;
}

EnvInstance three_road(const EnvParams& p) {
  const double gamma = param(p, "discount", 0.9);
  const double pit_prob = param(p, "pit_prob", 0.5);
  const double r_road[3] = {param(p, "r1", 1.0), param(p, "r2", 1.5), param(p, "r3", 0.5)};
  const int ns = 8;
  const int na = 3;
  EnvInstance env;
  env.name = "three-road";
  env.mdp = TabularMDP(ns, na, gamma);
  TabularMDP& m = env.mdp;
  for (int a = 0; a < na; ++a) {
    const int first = 1 + 2 * a;
    if (a == 1) {
      m.transition(0, a, first) = 1.0 - pit_prob;
      m.transition(0, a, kThreeRoadPit) += pit_prob;
    } else {
      m.transition(0, a, first) = 1.0;
    }
  }
  for (int road = 0; road < 3; ++road) {
    const int first = 1 + 2 * road;
    for (int a = 0; a < na; ++a) {
      m.transition(first, a, first + 1) = 1.0;
      m.transition(first + 1, a, 0) = 1.0;
      m.reward(first, a, first + 1) = r_road[road];
      m.reward(first + 1, a, 0) = r_road[road];
    }
  }
  for (int a = 0; a < na; ++a) m.transition(kThreeRoadPit, a, kThreeRoadPit) = 1.0;
  m.initial_dist[0] = 1.0;

  SaTable probs(ns, na, 1.0 / na);
  probs(0, 0) = 0.9;
  probs(0, 1) = 0.0;
  probs(0, 2) = 0.1;
  env.behavior = StochasticPolicy::from_probs(std::move(probs));
  env.n_episodes = 40;
  env.horizon = 150;
  return env;
}

int grid_state(int row, int col) { return row * 5 + col; }

EnvInstance shift_gridworld(const EnvParams& p) {
  const double gamma = param(p, "discount", 0.9);
  const double slip = param(p, "slip", 0.1);
  constexpr int n = 5;
  constexpr int up = 0, down = 1, left = 2, right = 3;
  EnvInstance env;
  env.name = "shift-gridworld";
  env.mdp = TabularMDP(n * n, 4, gamma);
  TabularMDP& m = env.mdp;
  const int start = grid_state(1, 1);
  const int goal = grid_state(n - 1, n - 1);
  auto move = [&](int r, int c, int a) {
    if (a == up) r = std::max(r - 1, 0);
    if (a == down) r = std::min(r + 1, n - 1);
    if (a == left) c = std::max(c - 1, 0);
    if (a == right) c = std::min(c + 1, n - 1);
    return grid_state(r, c);
  };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const int s = grid_state(r, c);
      for (int a = 0; a < 4; ++a) {
        if (r == 0 || c == 0) {
          m.transition(s, a, s) = 1.0;
        } else if (s == goal) {
          m.transition(s, a, start) = 1.0;
          m.reward(s, a, start) = 1.0;
        } else if (a == down || a == right) {
          m.transition(s, a, move(r, c, a)) += 1.0 - slip;
          m.transition(s, a, move(r, c, down)) += 0.5 * slip;
          m.transition(s, a, move(r, c, right)) += 0.5 * slip;
        } else {
          m.transition(s, a, move(r, c, a)) = 1.0;
        }
      }
    }
  m.initial_dist[start] = 1.0;

  SaTable probs(n * n, 4, 0.0);
  for (int s = 0; s < n * n; ++s) {
    probs(s, down) = 0.5;
    probs(s, right) = 0.5;
  }
  env.behavior = StochasticPolicy::from_probs(std::move(probs));
  env.n_episodes = 20;
  env.horizon = 150;
  return env;
}

EnvInstance random_mdp(const EnvParams& p, std::uint64_t seed) {
  const int ns = static_cast<int>(param(p, "n_states", 6));
  const int na = static_cast<int>(param(p, "n_actions", 3));
  if (ns < 1 || na < 1) throw ConfigError("random-mdp needs n_states, n_actions >= 1");
  Rng rng(derive_seed(seed, 0x52414e44));
  EnvInstance env;
  env.name = "random-mdp";
  env.mdp = random_tabular_mdp(rng, ns, na, param(p, "discount", 0.9), param(p, "sparsity", 0.0));
  env.behavior = random_policy(rng, ns, na);
  env.n_episodes = 50;
  env.horizon = 150;
  return env;
}

EnvInstance self_loop(const EnvParams& p) {
  EnvInstance env;
  env.name = "self-loop";
  env.mdp = TabularMDP(1, 1, param(p, "discount", 0.9));
  env.mdp.transition(0, 0, 0) = 1.0;
  env.mdp.reward(0, 0, 0) = 1.0;
  env.mdp.initial_dist[0] = 1.0;
  env.behavior = StochasticPolicy::uniform(1, 1);
  env.n_episodes = 1;
  env.horizon = 150;
  return env;
}

EnvInstance chain(const EnvParams& p) {
  EnvInstance env;
  env.name = "chain";
  env.mdp = TabularMDP(2, 1, param(p, "discount", 0.9));
  env.mdp.transition(0, 0, 1) = 1.0;
  env.mdp.transition(1, 0, 1) = 1.0;
  env.mdp.reward(0, 0, 1) = 1.0;
  env.mdp.initial_dist[0] = 1.0;
  env.behavior = StochasticPolicy::uniform(2, 1);
  env.n_episodes = 1;
  env.horizon = 150;
  return env;
}

const std::vector<EnvCatalogEntry>& env_catalog() {
  static const std::vector<EnvCatalogEntry> catalog = {
      {"three-road",
       "start state with three two-step roads; the behavior policy never takes the middle road",
       {{"discount", 0.9}, {"pit_prob", 0.5}, {"r1", 1.0}, {"r2", 1.5}, {"r3", 0.5}},
       [](const EnvParams& p, std::uint64_t) { return three_road(p); }},
      {"shift-gridworld",
       "5x5 grid with cliff edges the right/down behavior policy never visits",
       {{"discount", 0.9}, {"slip", 0.1}},
       [](const EnvParams& p, std::uint64_t) { return shift_gridworld(p); }},
      {"random-mdp", "seeded dense random MDP",
       {{"discount", 0.9}, {"n_states", 6}, {"n_actions", 3}, {"sparsity", 0.0}},
       [](const EnvParams& p, std::uint64_t seed) { return random_mdp(p, seed); }},
      {"chain", "two-state chain into an absorbing state", {{"discount", 0.9}},
       [](const EnvParams& p, std::uint64_t) { return chain(p); }},
      {"self-loop", "single state with a rewarding self-loop", {{"discount", 0.9}},
       [](const EnvParams& p, std::uint64_t) { return self_loop(p); }},
  };
  return catalog;
}

EnvInstance build_env(const std::string& name, const EnvParams& params, std::uint64_t seed) {
  for (const EnvCatalogEntry& e : env_catalog())
    if (e.name == name) {
      check_keys(name, params, e.defaults);
      EnvParams merged = e.defaults;
      for (const auto& [k, v] : params) merged[k] = v;
      return e.build(merged, seed);
    }
  throw UnknownEnv("unknown environment '" + name + "'");
}

}  // namespace damo
