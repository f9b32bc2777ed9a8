#pragma once

#include <optional>

#include "otclust/mixture.hpp"

namespace otclust {

struct SinkhornConfig {
  double tolerance = 1e-3;  // L-infinity marginal error
  int max_iterations = 1000;
  bool pin_last_potential = true;

  void validate() const {
    require(tolerance > 0.0, "sinkhorn tolerance must be positive");
    require(max_iterations >= 1, "sinkhorn max_iterations must be >= 1");
  }
};

struct SinkhornSolution {
  Vector potentials;  // omega, last entry 0 when pinned
  Vector tilted_weights;
  Responsibilities responsibilities;
  double marginal_error = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Solve the semi-dual problem for an N x K matrix of log-likelihood terms
/// `log_q` (log q_k(Y_i), or minus a cost) against target column masses
/// `weights` and a uniform row measure. Never throws on non-convergence;
/// check `converged`.
SinkhornSolution solve_semidual(const Matrix& log_q, const Vector& weights, const SinkhornConfig& cfg,
                                const Vector* warm_start = nullptr);

/// Entropic E-step; throws NonConvergence if the cap is hit.
SinkhornSolution sinkhorn_estep(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg);

/// alpha_k e^{omega_k} / sum_j alpha_j e^{omega_j}.
Vector tilt(const Vector& weights, const Vector& potentials);
Vector tilted_weights(const SinkhornSolution& solution);

/// Conditional plan Psi(k | Y_i) reconstructed from potentials.
Matrix plan_from_potentials(const Matrix& log_q, const Vector& weights, const Vector& potentials);

/// sum_k alpha_k omega_k - (1/N) sum_i log sum_k alpha_k e^{omega_k} q_k(Y_i).
double semidual_objective(const Matrix& log_q, const Vector& weights, const Vector& potentials);

/// sum_k a_k log(a_k / b_k).
double relative_entropy(const Vector& a, const Vector& b);

struct EntropicLoss {
  double value = 0.0;     // l(theta, alpha(theta)) - H(alpha | alpha(theta))
  double semidual = 0.0;  // semi-dual objective at the optimal potentials
  SinkhornSolution solution;
};

EntropicLoss loss_entropic_full(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg);
double loss_entropic(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg);

struct ParamGradient {
  Matrix locations;  // K x d
  Matrix variances;  // K x d, tied according to the spec's kind; zero when fixed
};

/// Gradient of -(1/N) sum_i log sum_k w_k q_k(Y_i) for frozen responsibilities.
ParamGradient gradient_given_responsibilities(const MixtureParams& params, const Dataset& data,
                                              const Matrix& psi);

ParamGradient grad_loss_entropic(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg);
ParamGradient grad_neg_loglik(const MixtureParams& params, const Dataset& data);

/// omega - 1 with omega re-gauged to alpha-weighted mean zero.
Vector weight_gradient_from_potentials(const Vector& weights, const Vector& potentials);
Vector grad_loss_weights(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg);

}  // namespace otclust
