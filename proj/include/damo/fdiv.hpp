#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace damo {

struct FGenerator {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> f_prime;
  std::function<double(double)> f_star;
  std::function<double(double)> f_star_prime;
  // Start of the strictly convex branch. Below it f uses the generator's
  // extension down to ratio 0; f(x) = +inf for x < 0.
  double domain_lo = 0.0;
  // True when y = f'(p/q) maximizes p*y - q*f_star(y), i.e. f_star is the
  // actual conjugate of f.
  bool closed_form_argmax = true;
};

// f(x) = (x - 1)^3 / 3 for x >= 1 and 0 on [0, 1);
// f_star(y) = max(y, 0) + 2/3 max(y, 0)^{3/2}.
FGenerator cubic_generator();
// Same f, with f_star(y) = 2/3 max(y - 1, 0)^{3/2} as printed in the source
// material for the ablation. Not the conjugate of f.
FGenerator cubic_paper_literal_generator();
// f_star(y) = y: the conjugate of the indicator of {1}. Replaces the f_star
// term by a linear one.
FGenerator linear_generator();

// "cubic", "cubic-paper-literal", "linear". Throws ConfigError otherwise.
FGenerator generator_by_name(const std::string& name);
std::vector<std::string> generator_names();

// sum_x q(x) f(p(x)/q(x)). Throws SupportViolation when p(x) > 0 = q(x).
double f_divergence(std::span<const double> p, std::span<const double> q,
                    const FGenerator& gen);

// Per-coordinate maximizer of p*y - q*f_star(y) found by expanding a
// bracket and running `iters` golden-section steps.
double golden_section_argmax(double p, double q, const FGenerator& gen, int iters);

// max_y E_p[y] - E_q[f_star(y)], solved coordinate-wise: closed form when
// the generator allows it, otherwise golden section with inner_steps steps.
double variational_f_divergence(std::span<const double> p, std::span<const double> q,
                                const FGenerator& gen, int inner_steps);

struct FenchelAudit {
  std::size_t grid_points = 0;
  std::size_t young_violations = 0;   // f(x) + f_star(y) < x*y - 1e-8
  double min_young_gap = 0.0;
  double worst_x = 0.0;
  double worst_y = 0.0;
  double max_equality_error = 0.0;    // at y = f'(x)
  double max_inverse_error = 0.0;     // |f_star'(f'(x)) - x|
  double min_second_difference = 0.0; // of f on the x grid
  bool passed(double tol = 1e-8) const;
};

// x on an n-point grid over [domain_lo, x_hi], y on an n-point grid over
// [y_lo, y_hi].
FenchelAudit fenchel_audit(const FGenerator& gen, int n, double x_hi, double y_lo,
                           double y_hi);

// Maximal sub-intervals of (lo, hi) where f(x) < x log x, located on a grid
// and refined by bisection.
std::vector<std::pair<double, double>> dominance_violations(const FGenerator& gen,
                                                            double lo, double hi,
                                                            int n);

}  // namespace damo
