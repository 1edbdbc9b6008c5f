#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "damo/dataset.hpp"
#include "damo/mdp.hpp"
#include "damo/serialize.hpp"

namespace damo {

enum class UnseenPolicy { uniform, self_loop };
std::string to_string(UnseenPolicy p);
UnseenPolicy unseen_policy_from_string(const std::string& s);

// Tabular maximum-likelihood dynamics with additive smoothing.
struct TabularModel {
  int n_states = 0;
  int n_actions = 0;
  SasTable counts;
  SasTable probs;
  SasTable reward_hat;
  double smoothing = 0.0;
  UnseenPolicy unseen_policy = UnseenPolicy::uniform;
  // Reward assigned to (s, a, s') cells with no observation.
  double unseen_reward = 0.0;

  double row_count(int s, int a) const;
  bool seen(int s, int a) const { return row_count(s, a) > 0.0; }
};

// Seen rows: (count + eps) / (row_count + |S| eps). Unseen rows follow
// unseen_policy. reward_hat is the per-cell mean of observed rewards.
TabularModel fit_model(const TransitionDataset& ds, int n_states, int n_actions,
                       double smoothing, UnseenPolicy unseen_policy,
                       double unseen_reward = 0.0);

enum class RewardSource { true_reward, learned_reward };

// true_reward requires the real reward table.
TabularMDP model_as_mdp(const TabularModel& model, const std::vector<double>& mu0, double gamma,
                        RewardSource source = RewardSource::learned_reward,
                        const SasTable* true_reward = nullptr);

// k model steps from each start state under `policy`; records
// start-major, horizon = k. Rewards come from reward_hat.
TransitionDataset rollout_synthetic(const TabularModel& model, const StochasticPolicy& policy,
                                    const std::vector<int>& start_states, int k,
                                    std::uint64_t seed);

// n states drawn uniformly from the source states of an offline buffer.
std::vector<int> branch_start_states(const TransitionDataset& ds, int n, std::uint64_t seed);
// n states drawn from mu0.
std::vector<int> initial_start_states(const std::vector<double>& mu0, int n, std::uint64_t seed);

struct ModelEnsemble {
  std::vector<TabularModel> members;
  int n = 7;
  int n_elite = 5;
  std::vector<int> elite_ids;
  std::vector<double> holdout_loglik;
};

// Members are fit on bootstrap resamples of the non-held-out records; the
// n_elite members with the highest held-out log-likelihood are elites.
ModelEnsemble ensemble_fit(const TransitionDataset& ds, int n_states, int n_actions, int n,
                           int n_elite, double holdout_fraction, std::uint64_t seed,
                           double smoothing, UnseenPolicy unseen_policy);

// Max pairwise total variation between elite rows at (s, a).
double disagreement(const ModelEnsemble& ens, int s, int a);
SaTable disagreement_table(const ModelEnsemble& ens);

ordered_json model_to_json(const TabularModel& model);
TabularModel model_from_json(const nlohmann::json& doc);
std::string model_hash(const TabularModel& model);

}  // namespace damo
