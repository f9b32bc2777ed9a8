#pragma once

#include <string>
#include <vector>

#include "otclust/quadrature.hpp"

namespace otclust {

/// Population model alpha* N(theta*, 1) + (1 - alpha*) N(-theta*, 1) with
/// expectations taken by composite Gauss-Legendre quadrature on each
/// component. `quadrature_order` / 10 is the number of points per panel.
class TwoGaussModel {
 public:
  TwoGaussModel(double theta_star, double alpha_star, int quadrature_order = 200);

  double theta_star() const { return theta_star_; }
  double alpha_star() const { return alpha_star_; }
  int quadrature_order() const { return order_; }

  /// E f(Y) under the population mixture, for f built from the posterior
  /// of (theta, alpha). Panels are refined around the posterior's midpoint.
  template <typename F>
  double expect(F&& f, double theta, double alpha) const {
    double kink = std::numeric_limits<double>::quiet_NaN(), width = 0.0;
    if (theta != 0.0 && alpha > 0.0 && alpha < 1.0) {
      kink = -(std::log(alpha) - std::log1p(-alpha)) / (2.0 * theta);
      width = M_PI / (2.0 * std::abs(theta));
    }
    double s = rule_.expectation(theta_star_, f, kink, width) * alpha_star_;
    if (alpha_star_ < 1.0) s += (1.0 - alpha_star_) * rule_.expectation(-theta_star_, f, kink, width);
    return s;
  }

 private:
  double theta_star_;
  double alpha_star_;
  int order_;
  NormalPanelRule rule_;
};

/// P(first component | y) for the model with parameters (theta, alpha).
double posterior_first(double y, double theta, double alpha);

/// E[y (alpha e^{theta y} - (1-alpha) e^{-theta y}) / (alpha e^{theta y} + (1-alpha) e^{-theta y})].
double map_F(const TwoGaussModel& model, double theta, double alpha);

/// E[posterior_first(Y; theta, alpha)].
double map_G(const TwoGaussModel& model, double theta, double alpha);

/// alpha(theta): the root of G(theta, .) = alpha*, to 1e-12 or better.
double solve_tilt(const TwoGaussModel& model, double theta);

/// Population negative log-likelihood at (theta, alpha).
double population_ell(const TwoGaussModel& model, double theta, double alpha);

/// Entropic loss: l(theta, alpha(theta)) - KL(alpha* | alpha(theta)).
double population_entropic(const TwoGaussModel& model, double theta);

enum class Method { EM, SEM };

struct PopulationIterates {
  Method method = Method::SEM;
  std::vector<double> theta_trace;  // theta^0 .. theta^steps
  double rho_bound = 0.0;
};

PopulationIterates population_iterates(const TwoGaussModel& model, Method method, double theta0, int steps);

struct LossCurveRow {
  double theta, ell, entropic, dell, dentropic, alpha_tilt;
};

/// Derivative columns are d/dtheta of the loss columns:
/// dell = theta - F(theta, alpha*), dentropic = theta - F(theta, alpha(theta)).
std::vector<LossCurveRow> loss_curves(const TwoGaussModel& model, const std::vector<double>& theta_grid);

/// Sign changes along a sampled derivative; entries with |v| <= zero_tol are skipped.
int count_stationary(const std::vector<double>& derivative, double zero_tol = 1e-13);

/// Uniform grid lo, lo + step, ..., up to hi (inclusive within rounding).
std::vector<double> uniform_grid(double lo, double hi, double step);

/// Smallest grid theta0 in (0, theta*] such that SEM is no farther from
/// theta* than EM for `steps` iterations, for every grid start from there up
/// to theta*. Reported only.
double estimate_theta_fast(const TwoGaussModel& model, int steps = 200, double step = 0.01);

std::string loss_curves_csv(const std::vector<LossCurveRow>& rows);

}  // namespace otclust
