#include "otclust/em.hpp"

#include <chrono>

namespace otclust {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

MixtureParams prepare(const MixtureParams& init, const FitConfig& cfg) {
  cfg.validate();
  init.validate();
  MixtureParams p = init;
  p.variances.fixed = !cfg.update_variances;
  return p;
}

Vector normalise_positive(Vector w) {
  w = w.cwiseMax(1e-300);
  return w / w.sum();
}

// Sinkhorn-EM at frozen weights. Appends to `report`; returns the final
// potentials for warm starts.
Vector sem_theta_phase(const Dataset& data, MixtureParams& params, const FitConfig& cfg, FitReport& report,
                       Vector omega, bool& converged) {
  converged = false;
  for (int t = 0; t < cfg.max_outer_iterations; ++t) {
    const Matrix log_q = log_density_matrix(params, data.points);
    SinkhornSolution sol = solve_semidual(log_q, params.weights, cfg.sinkhorn, &omega);
    if (!sol.converged) ++report.sinkhorn_nonconverged;
    report.max_marginal_error = std::max(report.max_marginal_error, sol.marginal_error);
    omega = sol.potentials;
    if (report.loss_trace.empty() || t > 0) {
      const double ell = neg_loglik_from_log_density(log_q, params.weights);
      report.loss_trace.push_back({ell, semidual_objective(log_q, params.weights, omega)});
    }
    MixtureParams next = mstep_gaussian(data, sol.responsibilities, params.variances, params.weights);
    const double change = l1_change(next, params);
    params = std::move(next);
    ++report.iterations;
    if (cfg.record_trajectory) report.trajectory.push_back(params);
    if (change < cfg.param_change_tolerance) {
      converged = true;
      break;
    }
  }
  return omega;
}

void finish_transport(const Dataset& data, const MixtureParams& params, const FitConfig& cfg, FitReport& report,
                      const Vector& omega) {
  const Matrix log_q = log_density_matrix(params, data.points);
  SinkhornSolution sol = solve_semidual(log_q, params.weights, cfg.sinkhorn, &omega);
  if (!sol.converged) ++report.sinkhorn_nonconverged;
  report.max_marginal_error = std::max(report.max_marginal_error, sol.marginal_error);
  report.loss_trace.push_back(
      {neg_loglik_from_log_density(log_q, params.weights), semidual_objective(log_q, params.weights, sol.potentials)});
  report.responsibilities = std::move(sol.responsibilities);
  report.final_params = params;
}

}  // namespace

void FitConfig::validate() const {
  require(max_outer_iterations >= 1, "max_outer_iterations must be >= 1");
  require(param_change_tolerance > 0.0, "param_change_tolerance must be positive");
  require(weight_step > 0.0, "weight step must be positive");
  require(weight_update_cadence >= 1, "weight_update_cadence must be >= 1");
  require(max_weight_iterations >= 1 && max_backtracks >= 0, "weight-phase limits out of range");
  sinkhorn.validate();
}

MixtureParams mstep_gaussian(const Dataset& data, const Responsibilities& resp, const VarianceSpec& spec,
                             const Vector& weights) {
  const Matrix& psi = resp.matrix;
  const Index n = data.size();
  const Index d = data.dims();
  const Index k = psi.cols();
  require(psi.rows() == n, "responsibility rows must match data");
  require(spec.components() == k && spec.dims() == d, "variance spec shape mismatch");

  const Vector mass = psi.colwise().sum().transpose();
  for (Index c = 0; c < k; ++c)
    if (!(mass(c) >= 1e-12)) throw EmptyComponent(c);

  MixtureParams out;
  out.locations = mass.cwiseInverse().asDiagonal() * (psi.transpose() * data.points);
  out.variances = spec;
  out.weights = weights;
  if (!spec.fixed) {
    Matrix s2(k, d);
    for (Index c = 0; c < k; ++c) {
      const Matrix diff = data.points.rowwise() - out.locations.row(c);
      s2.row(c) = psi.col(c).transpose() * diff.array().square().matrix();
    }
    Matrix& v = out.variances.values;
    switch (spec.kind) {
      case VarianceKind::SphericalShared: v.setConstant(s2.sum() / (mass.sum() * double(d))); break;
      case VarianceKind::SphericalPerComponent:
        for (Index c = 0; c < k; ++c) v.row(c).setConstant(s2.row(c).sum() / (mass(c) * double(d)));
        break;
      case VarianceKind::DiagonalPerComponent: v = mass.cwiseInverse().asDiagonal() * s2; break;
    }
    v = v.cwiseMax(kVarianceFloor);
  }
  return out;
}

FitReport em_fit(const Dataset& data, const MixtureParams& init, const FitConfig& cfg) {
  const auto start = Clock::now();
  data.validate();
  MixtureParams params = prepare(init, cfg);
  require(params.dims() == data.dims(), "init dimension does not match data");

  FitReport report;
  for (int t = 0; t < cfg.max_outer_iterations; ++t) {
    const Matrix log_q = log_density_matrix(params, data.points);
    report.loss_trace.push_back({neg_loglik_from_log_density(log_q, params.weights), LossPoint{}.entropic});
    const Responsibilities resp = vanilla_from_log_density(log_q, params.weights);
    MixtureParams next = mstep_gaussian(data, resp, params.variances, params.weights);
    if (cfg.update_weights) next.weights = normalise_positive(resp.column_means());
    const double change = l1_change(next, params);
    params = std::move(next);
    ++report.iterations;
    if (cfg.record_trajectory) report.trajectory.push_back(params);
    if (change < cfg.param_change_tolerance) {
      report.converged = true;
      break;
    }
  }
  const Matrix log_q = log_density_matrix(params, data.points);
  report.loss_trace.push_back({neg_loglik_from_log_density(log_q, params.weights), LossPoint{}.entropic});
  report.responsibilities = vanilla_from_log_density(log_q, params.weights);
  report.final_params = std::move(params);
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

FitReport sem_fit(const Dataset& data, const MixtureParams& init, const FitConfig& cfg) {
  if (cfg.update_weights) return coordinate_descent_fit(data, init, cfg);
  const auto start = Clock::now();
  data.validate();
  MixtureParams params = prepare(init, cfg);
  require(params.dims() == data.dims(), "init dimension does not match data");

  FitReport report;
  bool converged = false;
  const Vector omega = sem_theta_phase(data, params, cfg, report, Vector::Zero(params.components()), converged);
  report.converged = converged;
  finish_transport(data, params, cfg, report, omega);
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

Vector update_weights_eg(const Vector& weights, const Vector& gradient, double eta) {
  require(weights.size() == gradient.size(), "gradient length mismatch");
  require(eta >= 0.0, "step size must be non-negative");
  require((weights.array() > 0.0).all(), "weights must be positive");
  const Vector logits = weights.array().log().matrix() - eta * gradient;
  const double lse = log_sum_exp(logits);
  return normalise_positive((logits.array() - lse).exp().matrix());
}

FitReport coordinate_descent_fit(const Dataset& data, const MixtureParams& init, const FitConfig& cfg) {
  require(cfg.update_weights, "coordinate descent requires update_weights");
  const auto start = Clock::now();
  data.validate();
  MixtureParams params = prepare(init, cfg);
  require(params.dims() == data.dims(), "init dimension does not match data");

  FitConfig inner = cfg;
  inner.update_weights = false;

  FitReport report;
  Vector omega = Vector::Zero(params.components());
  for (int outer = 0; outer < cfg.max_outer_iterations; ++outer) {
    const MixtureParams before = params;
    bool theta_converged = false;
    omega = sem_theta_phase(data, params, inner, report, omega, theta_converged);

    const Matrix log_q = log_density_matrix(params, data.points);
    auto evaluate = [&](const Vector& w, SinkhornSolution& sol) {
      sol = solve_semidual(log_q, w, cfg.sinkhorn, &omega);
      if (!sol.converged) ++report.sinkhorn_nonconverged;
      report.max_marginal_error = std::max(report.max_marginal_error, sol.marginal_error);
      return semidual_objective(log_q, w, sol.potentials);
    };
    SinkhornSolution sol;
    double current = evaluate(params.weights, sol);
    for (int it = 0; it < cfg.max_weight_iterations; ++it) {
      const Vector grad = weight_gradient_from_potentials(params.weights, sol.potentials);
      double eta = cfg.weight_step;
      bool accepted = false;
      Vector candidate;
      SinkhornSolution candidate_sol;
      double candidate_loss = current;
      for (int h = 0; h <= cfg.max_backtracks; ++h, eta *= 0.5) {
        candidate = update_weights_eg(params.weights, grad, eta);
        candidate_loss = evaluate(candidate, candidate_sol);
        if (candidate_loss < current) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      const double step = (candidate - params.weights).cwiseAbs().sum();
      params.weights = candidate;
      sol = std::move(candidate_sol);
      omega = sol.potentials;
      current = candidate_loss;
      if (step < cfg.param_change_tolerance) break;
    }
    report.loss_trace.push_back({neg_loglik_from_log_density(log_q, params.weights), current});
    if (cfg.record_trajectory) report.trajectory.push_back(params);

    if (l1_change(params, before) < cfg.param_change_tolerance) {
      report.converged = true;
      break;
    }
  }
  finish_transport(data, params, cfg, report, omega);
  report.elapsed_ms = elapsed_ms(start);
  return report;
}

}  // namespace otclust
