#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "damo/mdp.hpp"
#include "damo/rng.hpp"

namespace damo {

using EnvParams = std::map<std::string, double>;

struct EnvInstance {
  std::string name;
  TabularMDP mdp;
  StochasticPolicy behavior;
  // Suggested offline collection size.
  int n_episodes = 0;
  int horizon = 0;
};

struct EnvCatalogEntry {
  std::string name;
  std::string description;
  EnvParams defaults;
  std::function<EnvInstance(const EnvParams&, std::uint64_t)> build;
};

const std::vector<EnvCatalogEntry>& env_catalog();

// Unknown names throw UnknownEnv; unknown parameter keys throw ConfigError.
EnvInstance build_env(const std::string& name, const EnvParams& params = {},
                      std::uint64_t seed = 0);

// Start s0 (state 0), three roads of two states each, and a pit (state 7).
// a1 enters road 1, a3 road 3; in the real system a2 reaches road 2 with
// probability 1 - pit_prob and otherwise the absorbing pit. Roads return to
// s0. The behavior policy plays (0.9, 0, 0.1) at s0.
EnvInstance three_road(const EnvParams& params = {});
inline constexpr int kThreeRoadStart = 0;
inline constexpr int kThreeRoadPit = 7;

// 5x5 grid, actions up/down/left/right. The agent starts at (1, 1); the goal
// (4, 4) pays 1 and resets to the start. Row 0 and column 0 are absorbing
// cliff cells. Moves right/down slip to a random one of right/down with
// probability `slip`. The behavior policy plays right/down evenly, so row 0
// and column 0 never appear in its data.
EnvInstance shift_gridworld(const EnvParams& params = {});
int grid_state(int row, int col);

// Dense random kernel, rewards in (0, 1], random mu0 and behavior.
EnvInstance random_mdp(const EnvParams& params, std::uint64_t seed);

// One state, one action, reward 1.
EnvInstance self_loop(const EnvParams& params = {});
// s0 -> s1 (absorbing), one action, reward 1 on the first step.
EnvInstance chain(const EnvParams& params = {});

// Random probability vector from normalized uniform draws; `sparsity` is the
// chance each entry is zeroed (one entry is always kept).
std::vector<double> random_simplex(Rng& rng, int n, double sparsity = 0.0);
StochasticPolicy random_policy(Rng& rng, int n_states, int n_actions, double logit_scale = 1.5);
TabularMDP random_tabular_mdp(Rng& rng, int n_states, int n_actions, double gamma,
                              double sparsity = 0.0);

}  // namespace damo
