#include "damo/fdiv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "damo/errors.hpp"

namespace damo {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double cubic_f(double x) {
  if (x < 0.0) return kInf;
  if (x < 1.0) return 0.0;
  const double d = x - 1.0;
  return d * d * d / 3.0;
}

double cubic_f_prime(double x) {
  if (x < 1.0) return 0.0;
  const double d = x - 1.0;
  return d * d;
}

double dominance_gap(const FGenerator& gen, double x) { return gen.f(x) - x * std::log(x); }

}  // namespace

FGenerator cubic_generator() {
  FGenerator g;
  g.name = "cubic";
  g.f = cubic_f;
  g.f_prime = cubic_f_prime;
  g.f_star = [](double y) {
    const double yp = std::max(y, 0.0);
    return yp + 2.0 / 3.0 * yp * std::sqrt(yp);
  };
  g.f_star_prime = [](double y) { return y < 0.0 ? 0.0 : 1.0 + std::sqrt(y); };
  g.domain_lo = 1.0;
  return g;
}

FGenerator cubic_paper_literal_generator() {
  FGenerator g;
  g.name = "cubic-paper-literal";
  g.f = cubic_f;
  g.f_prime = cubic_f_prime;
  g.f_star = [](double y) {
    const double u = std::max(y - 1.0, 0.0);
    return 2.0 / 3.0 * u * std::sqrt(u);
  };
  g.f_star_prime = [](double y) { return std::sqrt(std::max(y - 1.0, 0.0)); };
  g.domain_lo = 1.0;
  g.closed_form_argmax = false;
  return g;
}

FGenerator linear_generator() {
  FGenerator g;
  g.name = "linear";
  g.f = [](double x) { return x == 1.0 ? 0.0 : kInf; };
  g.f_prime = [](double) { return 0.0; };
  g.f_star = [](double y) { return y; };
  g.f_star_prime = [](double) { return 1.0; };
  g.domain_lo = 1.0;
  g.closed_form_argmax = false;
  return g;
}

FGenerator generator_by_name(const std::string& name) {
  if (name == "cubic") return cubic_generator();
  if (name == "cubic-paper-literal") return cubic_paper_literal_generator();
  if (name == "linear") return linear_generator();
  throw ConfigError("unknown f-divergence generator '" + name + "'");
}

std::vector<std::string> generator_names() { return {"cubic", "cubic-paper-literal", "linear"}; }

double f_divergence(std::span<const double> p, std::span<const double> q,
                    const FGenerator& gen) {
  if (p.size() != q.size()) throw Error("f_divergence: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] <= 0.0) {
      if (p[i] > 0.0)
        throw SupportViolation("f_divergence: p > 0 where q = 0 at index " + std::to_string(i));
      continue;
    }
    total += q[i] * gen.f(p[i] / q[i]);
  }
  return total;
}

double golden_section_argmax(double p, double q, const FGenerator& gen, int iters) {
  auto obj = [&](double y) { return p * y - q * gen.f_star(y); };
  // The objective is concave; grow the upper end until it stops increasing.
  double lo = -1.0;
  double hi = 1.0;
  while (obj(hi) < obj(2.0 * hi + 1.0) && hi < 1e12) hi = 2.0 * hi + 1.0;
  hi = 2.0 * hi + 1.0;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - invphi * (hi - lo);
  double b = lo + invphi * (hi - lo);
  double fa = obj(a);
  double fb = obj(b);
  for (int k = 0; k < iters; ++k) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + invphi * (hi - lo);
      fb = obj(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - invphi * (hi - lo);
      fa = obj(a);
    }
  }
  return 0.5 * (lo + hi);
}

double variational_f_divergence(std::span<const double> p, std::span<const double> q,
                                const FGenerator& gen, int inner_steps) {
  if (p.size() != q.size()) throw Error("variational_f_divergence: size mismatch");
  if (inner_steps < 1) throw Error("variational_f_divergence: inner_steps must be >= 1");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] <= 0.0) {
      if (p[i] > 0.0)
        throw SupportViolation("variational_f_divergence: unbounded at index " + std::to_string(i));
      continue;
    }
    const double y = gen.closed_form_argmax ? gen.f_prime(p[i] / q[i])
                                            : golden_section_argmax(p[i], q[i], gen, inner_steps);
    total += p[i] * y - q[i] * gen.f_star(y);
  }
  return total;
}

bool FenchelAudit::passed(double tol) const {
  return young_violations == 0 && max_equality_error <= tol && max_inverse_error <= tol &&
         min_second_difference >= -tol;
}

FenchelAudit fenchel_audit(const FGenerator& gen, int n, double x_hi, double y_lo,
                           double y_hi) {
  FenchelAudit audit;
  audit.min_young_gap = kInf;
  std::vector<double> xs(static_cast<std::size_t>(n));
  std::vector<double> ys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    xs[i] = gen.domain_lo + t * (x_hi - gen.domain_lo);
    ys[i] = y_lo + t * (y_hi - y_lo);
  }
  for (double x : xs)
    for (double y : ys) {
      const double gap = gen.f(x) + gen.f_star(y) - x * y;
      ++audit.grid_points;
      if (gap < audit.min_young_gap) {
        audit.min_young_gap = gap;
        audit.worst_x = x;
        audit.worst_y = y;
      }
      if (gap < -1e-8 * std::max(1.0, std::abs(x * y))) ++audit.young_violations;
    }
  for (double x : xs) {
    const double y = gen.f_prime(x);
    const double eq = gen.f(x) + gen.f_star(y) - x * y;
    audit.max_equality_error =
        std::max(audit.max_equality_error, std::abs(eq) / std::max(1.0, std::abs(x * y)));
    audit.max_inverse_error = std::max(audit.max_inverse_error, std::abs(gen.f_star_prime(y) - x));
  }
  audit.min_second_difference = kInf;
  const double h = n > 1 ? xs[1] - xs[0] : 1.0;
  for (int i = 1; i + 1 < n; ++i) {
    const double d2 = (gen.f(xs[i - 1]) - 2.0 * gen.f(xs[i]) + gen.f(xs[i + 1])) / (h * h);
    audit.min_second_difference = std::min(audit.min_second_difference, d2);
  }
  if (n < 3) audit.min_second_difference = 0.0;
  return audit;
}

std::vector<std::pair<double, double>> dominance_violations(const FGenerator& gen,
                                                            double lo, double hi,
                                                            int n) {
  std::vector<std::pair<double, double>> out;
  auto refine = [&](double good, double bad) {
    for (int k = 0; k < 100; ++k) {
      const double mid = 0.5 * (good + bad);
      (dominance_gap(gen, mid) < 0.0 ? bad : good) = mid;
    }
    return bad;
  };
  double prev_x = lo;
  bool prev_bad = dominance_gap(gen, lo) < 0.0;
  double start = lo;
  for (int i = 1; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const bool bad = dominance_gap(gen, x) < 0.0;
    if (bad && !prev_bad) start = refine(prev_x, x);
    if (!bad && prev_bad) out.emplace_back(start, refine(x, prev_x));
    prev_x = x;
    prev_bad = bad;
  }
  if (prev_bad) out.emplace_back(start, hi);
  return out;
}

}  // namespace damo
