#include "damo/serialize.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "damo/errors.hpp"

namespace damo {

ordered_json sa_table_to_json(const SaTable& t) {
  ordered_json out = ordered_json::array();
  for (int s = 0; s < t.n_states(); ++s) {
    ordered_json row = ordered_json::array();
    for (double v : t.row(s)) row.push_back(v);
    out.push_back(std::move(row));
  }
  return out;
}

SaTable sa_table_from_json(const nlohmann::json& doc) {
  if (!doc.is_array() || doc.empty() || !doc[0].is_array())
    throw ConfigError("expected a non-empty [s][a] array");
  const int ns = static_cast<int>(doc.size());
  const int na = static_cast<int>(doc[0].size());
  SaTable t(ns, na);
  for (int s = 0; s < ns; ++s) {
    if (doc[s].size() != static_cast<std::size_t>(na))
      throw ConfigError("ragged [s][a] array at s=" + std::to_string(s));
    for (int a = 0; a < na; ++a) t(s, a) = doc[s][a].get<double>();
  }
  return t;
}

ordered_json sas_table_to_json(const SasTable& t) {
  ordered_json out = ordered_json::array();
  for (int s = 0; s < t.n_states(); ++s) {
    ordered_json by_action = ordered_json::array();
    for (int a = 0; a < t.n_actions(); ++a) {
      ordered_json row = ordered_json::array();
      for (double v : t.row(s, a)) row.push_back(v);
      by_action.push_back(std::move(row));
    }
    out.push_back(std::move(by_action));
  }
  return out;
}

SasTable sas_table_from_json(const nlohmann::json& doc) {
  if (!doc.is_array() || doc.empty() || !doc[0].is_array() || doc[0].empty())
    throw ConfigError("expected a non-empty [s][a][s'] array");
  const int ns = static_cast<int>(doc.size());
  const int na = static_cast<int>(doc[0].size());
  SasTable t(ns, na);
  for (int s = 0; s < ns; ++s) {
    if (doc[s].size() != static_cast<std::size_t>(na))
      throw ConfigError("ragged [s][a][s'] array at s=" + std::to_string(s));
    for (int a = 0; a < na; ++a) {
      if (doc[s][a].size() != static_cast<std::size_t>(ns))
        throw ConfigError("ragged [s][a][s'] array at (s" + std::to_string(s) +
                          ",a" + std::to_string(a) + ")");
      for (int sp = 0; sp < ns; ++sp) t(s, a, sp) = doc[s][a][sp].get<double>();
    }
  }
  return t;
}

ordered_json mdp_to_json(const TabularMDP& mdp) {
  ordered_json doc;
  doc["n_states"] = mdp.n_states;
  doc["n_actions"] = mdp.n_actions;
  doc["transition"] = sas_table_to_json(mdp.transition);
  doc["reward"] = sas_table_to_json(mdp.reward);
  doc["initial_dist"] = mdp.initial_dist;
  doc["discount"] = mdp.discount;
  return doc;
}

TabularMDP mdp_from_json(const nlohmann::json& doc) {
  try {
    TabularMDP mdp(doc.at("n_states").get<int>(), doc.at("n_actions").get<int>(),
                   doc.at("discount").get<double>());
    mdp.transition = sas_table_from_json(doc.at("transition"));
    mdp.reward = sas_table_from_json(doc.at("reward"));
    mdp.initial_dist = doc.at("initial_dist").get<std::vector<double>>();
    if (mdp.transition.n_states() != mdp.n_states || mdp.transition.n_actions() != mdp.n_actions ||
        mdp.reward.n_states() != mdp.n_states || mdp.reward.n_actions() != mdp.n_actions)
      throw ConfigError("table shapes do not match n_states/n_actions");
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed MDP document: ") + e.what());
  }
}

std::string canonical_json(const TabularMDP& mdp) { return mdp_to_json(mdp).dump(); }

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string env_hash(const TabularMDP& mdp) { return sha256_hex(canonical_json(mdp)); }

}  // namespace damo
