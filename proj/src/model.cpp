#include "damo/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "damo/errors.hpp"
#include "damo/rng.hpp"

namespace damo {

std::string to_string(UnseenPolicy p) { return p == UnseenPolicy::uniform ? "uniform" : "self-loop"; }

UnseenPolicy unseen_policy_from_string(const std::string& s) {
  if (s == "uniform") return UnseenPolicy::uniform;
  if (s == "self-loop") return UnseenPolicy::self_loop;
  throw ConfigError("unknown unseen_policy '" + s + "' (expected uniform or self-loop)");
}

double TabularModel::row_count(int s, int a) const {
  double total = 0.0;
  for (double c : counts.row(s, a)) total += c;
  return total;
}

namespace {

void derive_tables(TabularModel& m, const SasTable& reward_sum) {
  const int ns = m.n_states;
  m.probs = SasTable(m.n_states, m.n_actions);
  m.reward_hat = SasTable(m.n_states, m.n_actions, m.unseen_reward);
  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < m.n_actions; ++a) {
      const double n = m.row_count(s, a);
      auto p = m.probs.row(s, a);
      if (n > 0.0) {
        const double denom = n + ns * m.smoothing;
        for (int sp = 0; sp < ns; ++sp) p[sp] = (m.counts(s, a, sp) + m.smoothing) / denom;
      } else if (m.unseen_policy == UnseenPolicy::uniform) {
        for (double& v : p) v = 1.0 / ns;
      } else {
        p[s] = 1.0;
      }
      for (int sp = 0; sp < ns; ++sp)
        if (m.counts(s, a, sp) > 0.0) m.reward_hat(s, a, sp) = reward_sum(s, a, sp) / m.counts(s, a, sp);
    }
}

}  // namespace

TabularModel fit_model(const TransitionDataset& ds, int n_states, int n_actions,
                       double smoothing, UnseenPolicy unseen_policy, double unseen_reward) {
  if (smoothing < 0.0) throw ConfigError("smoothing must be >= 0");
  TabularModel m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.smoothing = smoothing;
  m.unseen_policy = unseen_policy;
  m.unseen_reward = unseen_reward;
  m.counts = SasTable(n_states, n_actions);
  SasTable reward_sum(n_states, n_actions);
  for (const Transition& t : ds.transitions) {
    if (t.s < 0 || t.s >= n_states || t.sp < 0 || t.sp >= n_states || t.a < 0 || t.a >= n_actions)
      throw Error("fit_model: transition id out of range");
    m.counts(t.s, t.a, t.sp) += 1.0;
    reward_sum(t.s, t.a, t.sp) += t.r;
  }
  derive_tables(m, reward_sum);
  return m;
}

TabularMDP model_as_mdp(const TabularModel& model, const std::vector<double>& mu0, double gamma,
                        RewardSource source, const SasTable* true_reward) {
  TabularMDP mdp(model.n_states, model.n_actions, gamma);
  mdp.transition = model.probs;
  if (source == RewardSource::true_reward) {
    if (true_reward == nullptr) throw Error("model_as_mdp: true-reward mode needs the reward table");
    mdp.reward = *true_reward;
  } else {
    mdp.reward = model.reward_hat;
  }
  mdp.initial_dist = mu0;
  return mdp;
}

TransitionDataset rollout_synthetic(const TabularModel& model, const StochasticPolicy& policy,
                                    const std::vector<int>& start_states, int k,
                                    std::uint64_t seed) {
  if (k < 1) throw Error("rollout_synthetic: k must be >= 1");
  TransitionDataset ds;
  ds.source = Source::synthetic;
  ds.env_hash = model_hash(model);
  ds.n_states = model.n_states;
  ds.n_actions = model.n_actions;
  ds.horizon = k;
  ds.initial_labels = false;
  ds.transitions.reserve(start_states.size() * static_cast<std::size_t>(k));
  Rng rng(seed);
  for (int start : start_states) {
    int s = start;
    for (int t = 0; t < k; ++t) {
      const int a = rng.categorical(policy.probs().row(s));
      const int sp = rng.categorical(model.probs.row(s, a));
      ds.transitions.push_back({s, a, model.reward_hat(s, a, sp), sp});
      s = sp;
    }
  }
  return ds;
}

std::vector<int> branch_start_states(const TransitionDataset& ds, int n, std::uint64_t seed) {
  if (ds.empty()) throw EmptySource("branch_start_states: offline buffer is empty");
  Rng rng(seed);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& s : out) s = ds.transitions[rng.below(static_cast<int>(ds.size()))].s;
  return out;
}

std::vector<int> initial_start_states(const std::vector<double>& mu0, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& s : out) s = rng.categorical(mu0);
  return out;
}

ModelEnsemble ensemble_fit(const TransitionDataset& ds, int n_states, int n_actions, int n,
                           int n_elite, double holdout_fraction, std::uint64_t seed,
                           double smoothing, UnseenPolicy unseen_policy) {
  if (!(n >= n_elite && n_elite >= 1)) throw ConfigError("ensemble needs n >= n_elite >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must lie in [0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(static_cast<int>(i))]);
  const auto n_hold = static_cast<std::size_t>(std::floor(holdout_fraction * ds.size()));
  TransitionDataset train = ds;
  train.transitions.clear();
  std::vector<Transition> holdout;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_hold ? holdout : train.transitions).push_back(ds.transitions[order[i]]);

  ModelEnsemble ens;
  ens.n = n;
  ens.n_elite = n_elite;
  for (int m = 0; m < n; ++m) {
    TransitionDataset boot = train;
    for (auto& t : boot.transitions)
      t = train.transitions[rng.below(static_cast<int>(train.size()))];
    ens.members.push_back(fit_model(boot, n_states, n_actions, smoothing, unseen_policy));
    double ll = 0.0;
    for (const Transition& t : holdout)
      ll += std::log(std::max(ens.members.back().probs(t.s, t.a, t.sp), 1e-12));
    ens.holdout_loglik.push_back(ll);
  }
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(),
                   [&](int a, int b) { return ens.holdout_loglik[a] > ens.holdout_loglik[b]; });
  ens.elite_ids.assign(ids.begin(), ids.begin() + n_elite);
  std::sort(ens.elite_ids.begin(), ens.elite_ids.end());
  return ens;
}

double disagreement(const ModelEnsemble& ens, int s, int a) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ens.elite_ids.size(); ++i)
    for (std::size_t j = i + 1; j < ens.elite_ids.size(); ++j)
      worst = std::max(worst, total_variation(ens.members[ens.elite_ids[i]].probs.row(s, a),
                                              ens.members[ens.elite_ids[j]].probs.row(s, a)));
  return worst;
}

SaTable disagreement_table(const ModelEnsemble& ens) {
  const TabularModel& first = ens.members.at(0);
  SaTable u(first.n_states, first.n_actions);
  for (int s = 0; s < first.n_states; ++s)
    for (int a = 0; a < first.n_actions; ++a) u(s, a) = disagreement(ens, s, a);
  return u;
}

ordered_json model_to_json(const TabularModel& model) {
  ordered_json doc;
  doc["n_states"] = model.n_states;
  doc["n_actions"] = model.n_actions;
  doc["smoothing"] = model.smoothing;
  doc["unseen_policy"] = to_string(model.unseen_policy);
  doc["unseen_reward"] = model.unseen_reward;
  doc["counts"] = sas_table_to_json(model.counts);
  doc["reward_hat"] = sas_table_to_json(model.reward_hat);
  return doc;
}

TabularModel model_from_json(const nlohmann::json& doc) {
  try {
    TabularModel m;
    m.n_states = doc.at("n_states").get<int>();
    m.n_actions = doc.at("n_actions").get<int>();
    m.smoothing = doc.at("smoothing").get<double>();
    m.unseen_policy = unseen_policy_from_string(doc.at("unseen_policy").get<std::string>());
    m.unseen_reward = doc.value("unseen_reward", 0.0);
    m.counts = sas_table_from_json(doc.at("counts"));
    const SasTable reward_hat = sas_table_from_json(doc.at("reward_hat"));
    SasTable reward_sum(m.n_states, m.n_actions);
    for (std::size_t i = 0; i < reward_sum.size(); ++i)
      reward_sum.data()[i] = reward_hat.data()[i] * m.counts.data()[i];
    derive_tables(m, reward_sum);
    m.reward_hat = reward_hat;
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  }
}

std::string model_hash(const TabularModel& model) { return sha256_hex(model_to_json(model).dump()); }

}  // namespace damo
