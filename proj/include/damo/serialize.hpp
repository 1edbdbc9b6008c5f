#pragma once

#include <string>

#include "damo/mdp.hpp"
#include "json.hpp"

namespace damo {

using ordered_json = nlohmann::ordered_json;

// Field order is fixed (n_states, n_actions, transition, reward,
// initial_dist, discount) so the dump is canonical.
ordered_json mdp_to_json(const TabularMDP& mdp);
TabularMDP mdp_from_json(const nlohmann::json& doc);

std::string canonical_json(const TabularMDP& mdp);

// Hex SHA-256 of canonical_json.
std::string env_hash(const TabularMDP& mdp);
std::string sha256_hex(const std::string& bytes);

ordered_json sa_table_to_json(const SaTable& t);
SaTable sa_table_from_json(const nlohmann::json& doc);
ordered_json sas_table_to_json(const SasTable& t);
SasTable sas_table_from_json(const nlohmann::json& doc);

}  // namespace damo
