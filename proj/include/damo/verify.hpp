#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "damo/serialize.hpp"

namespace damo {

struct VerifyOptions {
  std::uint64_t seed = 0;
  // Monte Carlo samples per policy in the occupancy suite.
  std::int64_t mc_samples = 1000000;
};

struct SuiteResult {
  std::string suite;
  std::size_t assertions = 0;
  std::size_t expected_assertions = 0;
  std::size_t failures = 0;
  // Suite-specific summary numbers (worst errors, informational counts).
  ordered_json metrics = ordered_json::object();
  // First few failing assertions.
  std::vector<std::string> failure_messages;

  bool passed() const { return failures == 0 && assertions == expected_assertions; }
};

// Suite names in run order; "all" expands to every one of them.
//   occupancy       300  mass, flow residual and MC agreement, 5 envs x 20 policies
//   fenchel           3  cubic Fenchel-Young, equality, inverse (literal reported)
//   corollary-a4    100  variational vs direct f-divergence
//   lemma-a1        200  KL upper bound and its decomposition, 100 triples
//   theorem-2        10  fixed-point residual and gradient agreement, 5 envs
//   theorem-3       200  lower bound and alpha = 0 equality, 100 configs
//   equivalence      25  inner optimum vs surrogate
//   policy-gradient  50  outer gradient vs central differences
//   classifier        4  classifier vs exact log-ratio, 2 envs x 2 cases
const std::vector<std::string>& verify_suite_names();
std::size_t documented_assertions(const std::string& suite);

// Throws ConfigError for an unknown suite name.
SuiteResult run_verify_suite(const std::string& suite, const VerifyOptions& opts);

// "all" or a single suite name.
std::vector<SuiteResult> run_verify(const std::string& suite, const VerifyOptions& opts);

ordered_json verify_to_json(const std::vector<SuiteResult>& results, const VerifyOptions& opts);

}  // namespace damo
