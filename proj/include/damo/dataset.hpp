#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "damo/mdp.hpp"

namespace damo {

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int sp = 0;
  bool operator==(const Transition&) const = default;
};

// mixed marks the output of mixed_batch: offline records first, then
// synthetic ones.
enum class Source { offline, synthetic, mixed };
std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct TransitionDataset {
  std::vector<Transition> transitions;
  Source source = Source::offline;
  std::string env_hash;
  int n_states = 0;
  int n_actions = 0;
  // Fixed episode length used during collection (0 when records are not
  // episodic). Record i sits at step i % horizon of its episode.
  int horizon = 0;
  // Whether records at step 0 are known episode starts.
  bool initial_labels = false;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  bool operator==(const TransitionDataset&) const = default;
};

struct DatasetStats {
  std::size_t n = 0;
  std::set<std::pair<int, int>> covered_sa;
  std::set<std::tuple<int, int, int>> covered_sas;
  // States that appear as the source of some record.
  std::set<int> covered_states;
  // Frequency of labelled episode starts; without labels every recorded
  // state counts as a candidate start.
  std::vector<double> empirical_initial;
};

// n_episodes * horizon records; s0 ~ mu0, a ~ behavior, s' ~ T. Deterministic
// per seed. strip_initial_labels drops the episode-start annotation.
TransitionDataset collect_dataset(const TabularMDP& mdp, const StochasticPolicy& behavior,
                                  int n_episodes, int horizon, std::uint64_t seed,
                                  bool strip_initial_labels = false);

DatasetStats dataset_stats(const TransitionDataset& ds);

// First line is a header with source, env_hash and the shape fields; each
// following line is {"s","a","r","sp"}.
std::string write_jsonl(const TransitionDataset& ds);
// Throws MalformedLine with a 1-based line number.
TransitionDataset read_jsonl(const std::string& bytes);

// std::lround(batch * offline_ratio) offline draws, the rest synthetic, both
// uniform with replacement. Throws EmptySource when a source with a nonzero
// share is empty.
TransitionDataset mixed_batch(const TransitionDataset& d_r, const TransitionDataset& d_m,
                              double offline_ratio, int batch, std::uint64_t seed);

TransitionDataset concatenate(const TransitionDataset& a, const TransitionDataset& b);

// Normalized record counts over (s, a, s').
SasTable empirical_distribution(const TransitionDataset& ds, int n_states, int n_actions);

// Discount-weighted record frequencies: record at episode step t has weight
// gamma^t. Falls back to uniform weights when the dataset is not episodic.
// This estimates rho^{pi_beta}_T from an offline buffer.
SasTable discounted_empirical_occupancy(const TransitionDataset& ds, int n_states,
                                        int n_actions, double gamma);

}  // namespace damo
