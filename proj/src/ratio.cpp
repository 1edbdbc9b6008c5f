#include "damo/ratio.hpp"

#include <algorithm>
#include <cmath>

#include "damo/errors.hpp"
#include "damo/rng.hpp"

namespace damo {

std::string to_string(RatioMode m) { return m == RatioMode::exact ? "exact" : "classifier"; }

RatioMode ratio_mode_from_string(const std::string& s) {
  if (s == "exact") return RatioMode::exact;
  if (s == "classifier") return RatioMode::classifier;
  throw ConfigError("unknown ratio mode '" + s + "' (expected exact or classifier)");
}

LogRatioTable clip_log_ratio(LogRatioTable t, double clip) {
  for (double& v : t.values.data()) v = std::clamp(v, -clip, clip);
  t.clip = clip;
  return t;
}

LogRatioTable exact_log_ratio(const SasTable& rho_m, const SasTable& rho_beta, double clip) {
  if (rho_m.size() != rho_beta.size()) throw Error("exact_log_ratio: shape mismatch");
  LogRatioTable t{SasTable(rho_m.n_states(), rho_m.n_actions()), clip, RatioMode::exact};
  for (std::size_t i = 0; i < rho_m.size(); ++i) {
    const double m = rho_m.data()[i];
    const double b = rho_beta.data()[i];
    double v = 0.0;
    if (m > 0.0) v = b > 0.0 ? std::log(m / b) : clip;
    t.values.data()[i] = std::clamp(v, -clip, clip);
  }
  return t;
}

LogRatioTable exact_log_ratio(const OccupancyMeasure& rho_m, const OccupancyMeasure& rho_beta,
                              double clip) {
  return exact_log_ratio(rho_m.rho, rho_beta.rho, clip);
}

ClassifierParams train_classifier(const TransitionDataset& d_r, const TransitionDataset& d_m,
                                  int n_states, int n_actions, const ClassifierConfig& cfg) {
  if (d_r.empty()) throw EmptySource("train_classifier: offline buffer is empty");
  if (d_m.empty()) throw EmptySource("train_classifier: synthetic buffer is empty");
  if (!(cfg.balance > 0.0 && cfg.balance < 1.0)) throw ConfigError("classifier balance must lie in (0, 1)");

  // Weighted label counts per cell; the loss separates over cells.
  SasTable pos(n_states, n_actions);
  SasTable neg(n_states, n_actions);
  if (cfg.n_samples == 0) {
    const double wm = cfg.balance / static_cast<double>(d_m.size());
    const double wr = (1.0 - cfg.balance) / static_cast<double>(d_r.size());
    for (const Transition& t : d_m.transitions) pos(t.s, t.a, t.sp) += wm;
    for (const Transition& t : d_r.transitions) neg(t.s, t.a, t.sp) += wr;
  } else {
    Rng rng(cfg.seed);
    const long n_pos = std::lround(cfg.balance * cfg.n_samples);
    const double w = 1.0 / cfg.n_samples;
    for (long i = 0; i < cfg.n_samples; ++i) {
      if (i < n_pos) {
        const Transition& t = d_m.transitions[rng.below(static_cast<int>(d_m.size()))];
        pos(t.s, t.a, t.sp) += w;
      } else {
        const Transition& t = d_r.transitions[rng.below(static_cast<int>(d_r.size()))];
        neg(t.s, t.a, t.sp) += w;
      }
    }
  }

  ClassifierParams params{SasTable(n_states, n_actions), cfg};
  auto& w = params.weights.data();
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double n1 = pos.data()[i];
      const double n0 = neg.data()[i];
      const double n = n0 + n1;
      if (n == 0.0) continue;
      const double h = sigmoid(w[i]);
      const double grad = n * h - n1;
      const double hess = n * h * (1.0 - h) + 1e-12 * n;
      const double delta = std::clamp(-cfg.step_size * grad / hess, -2.0, 2.0);
      w[i] += delta;
    }
  }
  return params;
}

LogRatioTable classifier_log_ratio(const ClassifierParams& params, double clip) {
  const double prior = std::log(params.config.balance / (1.0 - params.config.balance));
  LogRatioTable t{params.weights, clip, RatioMode::classifier};
  for (double& v : t.values.data()) {
    // Untouched cells keep logit 0, i.e. h = 0.5 and no evidence either way.
    v = v == 0.0 ? 0.0 : v - prior;
  }
  return clip_log_ratio(std::move(t), clip);
}

}  // namespace damo
