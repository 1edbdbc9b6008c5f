#include "damo/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "damo/errors.hpp"

namespace damo {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const KeyValueConfig::Entry& e, const std::string& key,
                            const std::string& expected) {
  throw ConfigError("line " + std::to_string(e.line) + ": key '" + key + "': expected " +
                    expected + ", got '" + e.value + "'");
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (kv.entries_.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' repeated (first on line " +
                        std::to_string(kv.entries_[key].line) + ")");
    kv.entries_[key] = {value, lineno};
  }
  return kv;
}

const KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  auto& e = entries_[key];
  e.value = value;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(e->value.c_str(), &end);
  if (e->value.empty() || *end != '\0' || errno == ERANGE) bad_value(*e, key, "a number");
  return v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(e->value.c_str(), &end, 10);
  if (e->value.empty() || *end != '\0' || errno == ERANGE) bad_value(*e, key, "an integer");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  bad_value(*e, key, "true or false");
}

void KeyValueConfig::reject_unused() const {
  for (const auto& [key, e] : entries_)
    if (!used_.count(key))
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + key + "'");
}

std::string to_string(SolveMode m) { return m == SolveMode::exact ? "exact" : "sampled"; }
std::string to_string(PolicyUpdate p) {
  return p == PolicyUpdate::consistent ? "consistent" : "inconsistent";
}

SolverConfig solver_config_from(const KeyValueConfig& kv) {
  SolverConfig c;
  auto with_key = [&](const std::string& key, auto&& parse) {
    const KeyValueConfig::Entry* e = kv.find(key);
    if (!e) return;
    try {
      parse(e->value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e->line) + ": key '" + key + "': " + err.what());
    }
  };
  c.alpha = kv.get_double("alpha", c.alpha);
  c.fgen_name = kv.get_string("fgen_name", c.fgen_name);
  with_key("fgen_name", [&](const std::string& v) { generator_by_name(v); });
  c.inner_steps = static_cast<int>(kv.get_int("inner_steps", c.inner_steps));
  c.outer_steps = static_cast<int>(kv.get_int("outer_steps", c.outer_steps));
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.q_step_size = kv.get_double("q_step_size", c.q_step_size);
  c.policy_step_size = kv.get_double("policy_step_size", c.policy_step_size);
  c.fixed_alpha_actor = kv.get_bool("fixed_alpha_actor", c.fixed_alpha_actor);
  c.offline_ratio = kv.get_double("offline_ratio", c.offline_ratio);
  c.rollout_k = static_cast<int>(kv.get_int("rollout_k", c.rollout_k));
  with_key("ratio_mode", [&](const std::string& v) { c.ratio_mode = ratio_mode_from_string(v); });
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.double_q = kv.get_bool("double_q", c.double_q);
  c.entropy_coef = kv.get_double("entropy_coef", c.entropy_coef);
  c.discount = kv.get_double("discount", c.discount);
  with_key("mode", [&](const std::string& v) {
    if (v == "exact") c.mode = SolveMode::exact;
    else if (v == "sampled") c.mode = SolveMode::sampled;
    else throw ConfigError("expected exact or sampled");
  });
  with_key("policy_update", [&](const std::string& v) {
    if (v == "consistent") c.policy_update = PolicyUpdate::consistent;
    else if (v == "inconsistent") c.policy_update = PolicyUpdate::inconsistent;
    else throw ConfigError("expected consistent or inconsistent");
  });
  c.data_alignment = kv.get_bool("data_alignment", c.data_alignment);
  c.clip = kv.get_double("clip", c.clip);
  c.smoothing = kv.get_double("smoothing", c.smoothing);
  with_key("unseen_policy", [&](const std::string& v) { c.unseen_policy = unseen_policy_from_string(v); });
  c.unseen_reward = kv.get_double("unseen_reward", c.unseen_reward);
  c.n_rollouts = static_cast<int>(kv.get_int("n_rollouts", c.n_rollouts));
  c.rollout_from_initial = kv.get_bool("rollout_from_initial", c.rollout_from_initial);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.classifier.steps = static_cast<int>(kv.get_int("classifier_steps", c.classifier.steps));
  c.classifier.step_size = kv.get_double("classifier_step_size", c.classifier.step_size);
  c.classifier.balance = kv.get_double("classifier_balance", c.classifier.balance);
  c.classifier.n_samples = static_cast<int>(kv.get_int("classifier_samples", c.classifier.n_samples));
  c.classifier.seed =
      static_cast<std::uint64_t>(kv.get_int("classifier_seed", static_cast<long long>(c.classifier.seed)));
  try {
    c.validate();
  } catch (const ConfigError& err) {
    // Point at the line of the named field when there is one.
    const std::string msg = err.what();
    for (const auto& [key, e] : kv.entries())
      if (msg.find("invalid " + key + ":") == 0)
        throw ConfigError("line " + std::to_string(e.line) + ": key '" + key + "': " + msg);
    throw;
  }
  return c;
}

}  // namespace damo
