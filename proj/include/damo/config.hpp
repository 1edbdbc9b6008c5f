#pragma once

#include <map>
#include <set>
#include <string>

#include "damo/solver.hpp"

namespace damo {

// key = value lines; '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  // Throws ConfigError("line N: ...") on malformed lines or repeated keys.
  static KeyValueConfig parse(const std::string& text);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const Entry* find(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // Typed accessors; the fallback is returned when the key is absent. Each
  // marks the key as used and throws ConfigError naming line and key on a
  // bad value.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws ConfigError for the first key nobody asked for.
  void reject_unused() const;

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

// Reads every SolverConfig field; keys match the field names, with
// classifier_steps, classifier_step_size, classifier_balance,
// classifier_samples and classifier_seed for the classifier.
SolverConfig solver_config_from(const KeyValueConfig& kv);

std::string to_string(SolveMode m);
std::string to_string(PolicyUpdate p);

}  // namespace damo
