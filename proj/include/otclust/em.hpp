#pragma once

#include <utility>
#include <vector>

#include "otclust/mixture.hpp"
#include "otclust/sinkhorn.hpp"

namespace otclust {

struct FitConfig {
  int max_outer_iterations = 100;
  double param_change_tolerance = 1e-3;  // L1 over locations, variances, weights
  SinkhornConfig sinkhorn;
  bool update_variances = false;
  bool update_weights = false;
  double weight_step = 1.0;  // initial eta for the exponentiated-gradient phase
  int weight_update_cadence = 6;
  int max_weight_iterations = 100;
  int max_backtracks = 30;
  bool record_trajectory = false;

  void validate() const;
};

struct LossPoint {
  double ell = std::numeric_limits<double>::quiet_NaN();      // l(theta, alpha)
  double entropic = std::numeric_limits<double>::quiet_NaN();  // L(theta); NaN when not evaluated
};

struct FitReport {
  MixtureParams final_params;
  std::vector<LossPoint> loss_trace;
  std::vector<MixtureParams> trajectory;  // filled when record_trajectory
  Responsibilities responsibilities;
  bool converged = false;
  int iterations = 0;
  std::uint64_t seed = 0;
  double elapsed_ms = 0.0;
  int sinkhorn_nonconverged = 0;
  double max_marginal_error = 0.0;
};

/// Weighted-mean M-step. Variances are re-estimated when `spec.fixed` is
/// false; weights are copied through unchanged.
MixtureParams mstep_gaussian(const Dataset& data, const Responsibilities& resp, const VarianceSpec& spec,
                             const Vector& weights);

FitReport em_fit(const Dataset& data, const MixtureParams& init, const FitConfig& cfg);

/// Sinkhorn-EM. Weights stay at their initial values unless
/// cfg.update_weights, in which case this runs coordinate_descent_fit.
FitReport sem_fit(const Dataset& data, const MixtureParams& init, const FitConfig& cfg);

/// alpha_k exp(-eta g_k), renormalised.
Vector update_weights_eg(const Vector& weights, const Vector& gradient, double eta);

/// Alternates Sinkhorn-EM in theta with backtracked exponentiated-gradient
/// steps in alpha.
FitReport coordinate_descent_fit(const Dataset& data, const MixtureParams& init, const FitConfig& cfg);

}  // namespace otclust
