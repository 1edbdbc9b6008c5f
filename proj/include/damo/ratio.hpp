#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "damo/dataset.hpp"
#include "damo/mdp.hpp"

namespace damo {

enum class RatioMode { exact, classifier };
std::string to_string(RatioMode m);
RatioMode ratio_mode_from_string(const std::string& s);

// Estimate of log(rho^pi_M / rho^{pi_beta}_T) over (s, a, s').
struct LogRatioTable {
  SasTable values;
  double clip = 10.0;
  RatioMode mode = RatioMode::exact;
};

LogRatioTable clip_log_ratio(LogRatioTable t, double clip);

// log(rho_m / rho_beta) where both are positive; +clip where only rho_m is
// positive; 0 where rho_m is zero. Clipped to [-clip, clip].
LogRatioTable exact_log_ratio(const SasTable& rho_m, const SasTable& rho_beta, double clip);
LogRatioTable exact_log_ratio(const OccupancyMeasure& rho_m, const OccupancyMeasure& rho_beta,
                              double clip);

struct ClassifierConfig {
  int steps = 200;
  double step_size = 1.0;
  // Share of synthetic examples in the balanced training mix.
  double balance = 0.5;
  // 0 trains on the full buffers with balance weights; otherwise draws this
  // many examples with replacement.
  int n_samples = 0;
  std::uint64_t seed = 0;
};

// One-hot logistic model: logit(s, a, s') = weights(s, a, s').
struct ClassifierParams {
  SasTable weights;
  ClassifierConfig config;
};

// Cross-entropy with label 1 on synthetic (d_m) and 0 on offline (d_r)
// records, minimized by damped per-cell Newton steps of magnitude at most 2.
// Throws EmptySource when either buffer is empty.
ClassifierParams train_classifier(const TransitionDataset& d_r, const TransitionDataset& d_m,
                                  int n_states, int n_actions, const ClassifierConfig& cfg);

inline double sigmoid(double w) { return 1.0 / (1.0 + std::exp(-w)); }

// log(h / (1 - h)) minus the prior log-odds of the balance, clipped.
LogRatioTable classifier_log_ratio(const ClassifierParams& params, double clip);

}  // namespace damo
