#include "damo/dataset.hpp"

#include <cmath>
#include <sstream>

#include "damo/errors.hpp"
#include "damo/rng.hpp"
#include "damo/serialize.hpp"

namespace damo {

std::string to_string(Source s) {
  switch (s) {
    case Source::offline: return "offline";
    case Source::synthetic: return "synthetic";
    case Source::mixed: return "mixed";
  }
  return "offline";
}

Source source_from_string(const std::string& s) {
  if (s == "offline") return Source::offline;
  if (s == "synthetic") return Source::synthetic;
  if (s == "mixed") return Source::mixed;
  throw Error("unknown dataset source '" + s + "'");
}

TransitionDataset collect_dataset(const TabularMDP& mdp, const StochasticPolicy& behavior,
                                  int n_episodes, int horizon, std::uint64_t seed,
                                  bool strip_initial_labels) {
  if (horizon < 1) throw Error("collect_dataset: horizon must be >= 1");
  TransitionDataset ds;
  ds.source = Source::offline;
  ds.env_hash = env_hash(mdp);
  ds.n_states = mdp.n_states;
  ds.n_actions = mdp.n_actions;
  ds.horizon = horizon;
  ds.initial_labels = !strip_initial_labels;
  ds.transitions.reserve(static_cast<std::size_t>(std::max(n_episodes, 0)) * horizon);
  Rng rng(seed);
  for (int ep = 0; ep < n_episodes; ++ep) {
    int s = rng.categorical(mdp.initial_dist);
    for (int t = 0; t < horizon; ++t) {
      const int a = rng.categorical(behavior.probs().row(s));
      const int sp = rng.categorical(mdp.transition.row(s, a));
      ds.transitions.push_back({s, a, mdp.reward(s, a, sp), sp});
      s = sp;
    }
  }
  return ds;
}

DatasetStats dataset_stats(const TransitionDataset& ds) {
  DatasetStats st;
  st.n = ds.size();
  st.empirical_initial.assign(static_cast<std::size_t>(std::max(ds.n_states, 0)), 0.0);
  double starts = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Transition& t = ds.transitions[i];
    st.covered_sa.emplace(t.s, t.a);
    st.covered_sas.emplace(t.s, t.a, t.sp);
    st.covered_states.insert(t.s);
    const bool is_start =
        ds.initial_labels && ds.horizon > 0 ? i % static_cast<std::size_t>(ds.horizon) == 0 : true;
    if (is_start && t.s < static_cast<int>(st.empirical_initial.size())) {
      st.empirical_initial[t.s] += 1.0;
      starts += 1.0;
    }
  }
  if (starts > 0.0)
    for (double& v : st.empirical_initial) v /= starts;
  return st;
}

std::string write_jsonl(const TransitionDataset& ds) {
  std::string out;
  ordered_json header;
  header["source"] = to_string(ds.source);
  header["env_hash"] = ds.env_hash;
  header["n_states"] = ds.n_states;
  header["n_actions"] = ds.n_actions;
  header["horizon"] = ds.horizon;
  header["initial_labels"] = ds.initial_labels;
  out += header.dump();
  out += '\n';
  for (const Transition& t : ds.transitions) {
    ordered_json line;
    line["s"] = t.s;
    line["a"] = t.a;
    line["r"] = t.r;
    line["sp"] = t.sp;
    out += line.dump();
    out += '\n';
  }
  return out;
}

TransitionDataset read_jsonl(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  std::size_t lineno = 0;
  TransitionDataset ds;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      if (!have_header) throw MalformedLine(lineno, "missing header");
      continue;
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedLine(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw MalformedLine(lineno, "expected a JSON object");
    try {
      if (!have_header) {
        if (!doc.contains("source") || !doc.contains("env_hash"))
          throw MalformedLine(lineno, "missing header");
        ds.source = source_from_string(doc.at("source").get<std::string>());
        ds.env_hash = doc.at("env_hash").get<std::string>();
        ds.n_states = doc.value("n_states", 0);
        ds.n_actions = doc.value("n_actions", 0);
        ds.horizon = doc.value("horizon", 0);
        ds.initial_labels = doc.value("initial_labels", false);
        have_header = true;
        continue;
      }
      for (const char* key : {"s", "a", "sp"})
        if (!doc.contains(key) || !doc.at(key).is_number_integer())
          throw MalformedLine(lineno, std::string("field '") + key + "' must be an integer");
      if (!doc.contains("r") || !doc.at("r").is_number())
        throw MalformedLine(lineno, "field 'r' must be a number");
      Transition t{doc.at("s").get<int>(), doc.at("a").get<int>(), doc.at("r").get<double>(),
                   doc.at("sp").get<int>()};
      const bool bad_state = t.s < 0 || t.sp < 0 ||
                             (ds.n_states > 0 && (t.s >= ds.n_states || t.sp >= ds.n_states));
      const bool bad_action = t.a < 0 || (ds.n_actions > 0 && t.a >= ds.n_actions);
      if (bad_state || bad_action) throw MalformedLine(lineno, "id out of range");
      ds.transitions.push_back(t);
    } catch (const MalformedLine&) {
      throw;
    } catch (const std::exception& e) {
      throw MalformedLine(lineno, e.what());
    }
  }
  if (!have_header) throw MalformedLine(lineno + 1, "missing header");
  return ds;
}

TransitionDataset mixed_batch(const TransitionDataset& d_r, const TransitionDataset& d_m,
                              double offline_ratio, int batch, std::uint64_t seed) {
  if (!(offline_ratio >= 0.0 && offline_ratio <= 1.0))
    throw Error("mixed_batch: offline_ratio must lie in [0, 1]");
  const long n_off = std::lround(static_cast<double>(batch) * offline_ratio);
  const long n_syn = batch - n_off;
  if (n_off > 0 && d_r.empty()) throw EmptySource("mixed_batch: offline buffer is empty");
  if (n_syn > 0 && d_m.empty()) throw EmptySource("mixed_batch: synthetic buffer is empty");
  TransitionDataset out;
  out.source = Source::mixed;
  out.env_hash = d_r.env_hash;
  out.n_states = std::max(d_r.n_states, d_m.n_states);
  out.n_actions = std::max(d_r.n_actions, d_m.n_actions);
  out.transitions.reserve(static_cast<std::size_t>(std::max(batch, 0)));
  Rng rng(seed);
  for (long i = 0; i < n_off; ++i)
    out.transitions.push_back(d_r.transitions[rng.below(static_cast<int>(d_r.size()))]);
  for (long i = 0; i < n_syn; ++i)
    out.transitions.push_back(d_m.transitions[rng.below(static_cast<int>(d_m.size()))]);
  return out;
}

TransitionDataset concatenate(const TransitionDataset& a, const TransitionDataset& b) {
  TransitionDataset out = a;
  out.transitions.insert(out.transitions.end(), b.transitions.begin(), b.transitions.end());
  if (a.horizon != b.horizon) out.horizon = 0;
  out.initial_labels = a.initial_labels && b.initial_labels && out.horizon > 0;
  return out;
}

SasTable empirical_distribution(const TransitionDataset& ds, int n_states, int n_actions) {
  SasTable t(n_states, n_actions);
  for (const Transition& tr : ds.transitions) t(tr.s, tr.a, tr.sp) += 1.0;
  if (!ds.empty())
    for (double& v : t.data()) v /= static_cast<double>(ds.size());
  return t;
}

SasTable discounted_empirical_occupancy(const TransitionDataset& ds, int n_states,
                                        int n_actions, double gamma) {
  SasTable t(n_states, n_actions);
  if (ds.empty()) return t;
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Transition& tr = ds.transitions[i];
    const double w =
        ds.horizon > 0 ? std::pow(gamma, static_cast<double>(i % static_cast<std::size_t>(ds.horizon)))
                       : 1.0;
    t(tr.s, tr.a, tr.sp) += w;
    total += w;
  }
  for (double& v : t.data()) v /= total;
  return t;
}

}  // namespace damo
