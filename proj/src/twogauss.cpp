#include "otclust/twogauss.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace otclust {

namespace {

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

// d/dalpha of G(theta, alpha).
double map_G_alpha(const TwoGaussModel& model, double theta, double alpha) {
  return model.expect([&](double y) {
           const double p = posterior_first(y, theta, alpha);
           return p * (1.0 - p);
         }, theta, alpha) /
         (alpha * (1.0 - alpha));
}

}  // namespace

TwoGaussModel::TwoGaussModel(double theta_star, double alpha_star, int quadrature_order)
    : theta_star_(theta_star), alpha_star_(alpha_star), order_(quadrature_order), rule_(quadrature_order / 10) {
  require(std::isfinite(theta_star), "theta* must be finite");
  require(alpha_star > 0.0 && alpha_star <= 1.0, "alpha* must lie in (0, 1]");
  require(quadrature_order >= 40, "quadrature order must be >= 40");
}

double posterior_first(double y, double theta, double alpha) {
  if (alpha >= 1.0) return 1.0;
  if (alpha <= 0.0) return 0.0;
  const double z = 2.0 * theta * y + std::log(alpha) - std::log1p(-alpha);
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double map_F(const TwoGaussModel& model, double theta, double alpha) {
  return model.expect([&](double y) { return y * (2.0 * posterior_first(y, theta, alpha) - 1.0); }, theta, alpha);
}

double map_G(const TwoGaussModel& model, double theta, double alpha) {
  return model.expect([&](double y) { return posterior_first(y, theta, alpha); }, theta, alpha);
}

// Newton with a bisection safeguard on the monotone map alpha -> G - alpha*.
double solve_tilt(const TwoGaussModel& model, double theta) {
  const double target = model.alpha_star();
  double lo = 1e-15, hi = 1.0 - 1e-15;
  if (map_G(model, theta, hi) <= target) return hi;
  if (map_G(model, theta, lo) >= target) return lo;
  double a = target;
  for (int it = 0; it < 200; ++it) {
    const double r = map_G(model, theta, a) - target;
    if (r == 0.0) return a;
    if (r > 0.0)
      hi = a;
    else
      lo = a;
    if (hi - lo <= 1e-15) break;
    const double slope = map_G_alpha(model, theta, a);
    double next = a - r / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - a) <= 2e-16) return next;
    a = next;
  }
  return 0.5 * (lo + hi);
}

double population_ell(const TwoGaussModel& model, double theta, double alpha) {
  const double la = safe_log(alpha), lb = safe_log(1.0 - alpha);
  return model.expect([&](double y) {
    return 0.5 * kLog2Pi + 0.5 * (y * y + theta * theta) - log_add_exp(la + theta * y, lb - theta * y);
  }, theta, alpha);
}

double population_entropic(const TwoGaussModel& model, double theta) {
  const double tilted = solve_tilt(model, theta);
  const double a = model.alpha_star();
  double kl = a * (std::log(a) - std::log(tilted));
  if (a < 1.0) kl += (1.0 - a) * (std::log1p(-a) - std::log1p(-tilted));
  return population_ell(model, theta, tilted) - kl;
}

PopulationIterates population_iterates(const TwoGaussModel& model, Method method, double theta0, int steps) {
  require(steps >= 0, "steps must be non-negative");
  PopulationIterates out;
  out.method = method;
  out.theta_trace.reserve(steps + 1);
  double theta = theta0;
  out.theta_trace.push_back(theta);
  for (int t = 0; t < steps; ++t) {
    const double alpha = method == Method::SEM ? solve_tilt(model, theta) : model.alpha_star();
    theta = map_F(model, theta, alpha);
    out.theta_trace.push_back(theta);
  }
  const double m = std::min(theta0, model.theta_star());
  out.rho_bound = theta0 > 0.0 ? std::exp(-0.5 * m * m) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<LossCurveRow> loss_curves(const TwoGaussModel& model, const std::vector<double>& theta_grid) {
  std::vector<LossCurveRow> rows;
  rows.reserve(theta_grid.size());
  const double a = model.alpha_star();
  for (double theta : theta_grid) {
    require(std::isfinite(theta), "grid must be finite");
    LossCurveRow r;
    r.theta = theta;
    r.alpha_tilt = solve_tilt(model, theta);
    r.ell = population_ell(model, theta, a);
    double kl = a * (std::log(a) - std::log(r.alpha_tilt));
    if (a < 1.0) kl += (1.0 - a) * (std::log1p(-a) - std::log1p(-r.alpha_tilt));
    r.entropic = population_ell(model, theta, r.alpha_tilt) - kl;
    r.dell = theta - map_F(model, theta, a);
    r.dentropic = theta - map_F(model, theta, r.alpha_tilt);
    rows.push_back(r);
  }
  return rows;
}

int count_stationary(const std::vector<double>& derivative, double zero_tol) {
  int changes = 0;
  int last = 0;
  for (double v : derivative) {
    if (std::abs(v) <= zero_tol) continue;
    const int s = v > 0.0 ? 1 : -1;
    if (last != 0 && s != last) ++changes;
    last = s;
  }
  return changes;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  require(step > 0.0 && hi >= lo, "invalid grid");
  const long n = long(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> g(n + 1);
  for (long i = 0; i <= n; ++i) g[i] = lo + double(i) * step;
  return g;
}

double estimate_theta_fast(const TwoGaussModel& model, int steps, double step) {
  const double ts = model.theta_star();
  double best = ts;
  for (double t0 = ts; t0 > 0.5 * step; t0 -= step) {
    const auto sem = population_iterates(model, Method::SEM, t0, steps).theta_trace;
    const auto em = population_iterates(model, Method::EM, t0, steps).theta_trace;
    bool ok = true;
    for (std::size_t t = 0; t < sem.size() && ok; ++t)
      ok = std::abs(sem[t] - ts) <= std::abs(em[t] - ts) + 1e-12;
    if (!ok) break;
    best = t0;
  }
  return best;
}

std::string loss_curves_csv(const std::vector<LossCurveRow>& rows) {
  std::ostringstream out;
  out << "theta,ell,L,dell,dL,alpha_tilt\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.theta, r.ell, r.entropic, r.dell,
                  r.dentropic, r.alpha_tilt);
    out << buf;
  }
  return out.str();
}

}  // namespace otclust
