#include "otclust/sinkhorn.hpp"

#include <algorithm>

namespace otclust {

namespace {

// Above this |log u| the scaling is folded back into the kernel.
constexpr double kAbsorbThreshold = 30.0;
// Column means below this are recomputed in the log domain.
constexpr double kTinyMass = 1e-280;

struct Marginals {
  Vector col_mean;
  double error = 0.0;
};

// Exact log-domain plan and its column means for potentials omega.
Matrix exact_plan(const Matrix& base, const Vector& omega) {
  Matrix logits = base.rowwise() + omega.transpose();
  return row_softmax(logits);
}

double marginal_error(const Vector& col_mean, const Vector& weights) {
  return (col_mean - weights).cwiseAbs().maxCoeff();
}

double objective(const Matrix& base, const Vector& weights, const Vector& omega) {
  const Matrix logits = base.rowwise() + omega.transpose();
  return weights.dot(omega) - row_log_sum_exp(logits).mean();
}

// Kernel-based scaling: Psi_ik = E_ik u_k / sum_j E_ij u_j, with
// E = exp(base + omega_abs - rowmax) and u = exp(omega - omega_abs).
class ScalingKernel {
 public:
  ScalingKernel(const Matrix& base, const Vector& omega) : base_(base) { absorb(omega); }

  void absorb(const Vector& omega) {
    omega_abs_ = omega;
    Matrix shifted = base_.rowwise() + omega.transpose();
    const Vector m = shifted.rowwise().maxCoeff();
    shifted.colwise() -= m;
    kernel_ = shifted.array().exp().matrix();
  }

  bool needs_absorb(const Vector& omega) const {
    return (omega - omega_abs_).cwiseAbs().maxCoeff() > kAbsorbThreshold;
  }

  // Column means of the plan at omega. Returns false if a column underflows.
  bool column_means(const Vector& omega, Vector& out) const {
    const Vector u = (omega - omega_abs_).array().exp().matrix();
    const Vector row = kernel_ * u;
    const Vector inv = row.cwiseInverse();
    out = (kernel_.transpose() * inv).cwiseProduct(u) / double(kernel_.rows());
    return all_finite(out) && out.minCoeff() > kTinyMass;
  }

 private:
  const Matrix& base_;
  Matrix kernel_;
  Vector omega_abs_;
};

// Log of the exact column means, safe when some of them underflow.
Vector log_column_means(const Matrix& base, const Vector& omega) {
  const Matrix logits = base.rowwise() + omega.transpose();
  const Vector lse = row_log_sum_exp(logits);
  const Matrix log_psi = logits.colwise() - lse;
  Vector out(base.cols());
  for (Index k = 0; k < base.cols(); ++k) out(k) = log_sum_exp(log_psi.col(k)) - std::log(double(base.rows()));
  return out;
}

// Negative Hessian of the semi-dual, built as a weighted Laplacian so that
// nearly one-hot rows keep their precision.
Matrix semidual_curvature(const Matrix& psi) {
  const Index k = psi.cols();
  Matrix a = -(psi.transpose() * psi) / double(psi.rows());
  for (Index j = 0; j < k; ++j) {
    a(j, j) = 0.0;
    a(j, j) = -a.row(j).sum();
  }
  return a;
}

// One safeguarded Newton ascent step on the reduced (last coordinate fixed)
// semi-dual. Returns false when no improving step was found.
bool newton_step(const Matrix& base, const Vector& weights, Vector& omega, double current_error) {
  const Index k = base.cols();
  const Matrix psi = exact_plan(base, omega);
  const Vector col_mean = psi.colwise().mean().transpose();
  const Vector grad = weights - col_mean;
  const Index r = k - 1;

  Matrix a = semidual_curvature(psi).topLeftCorner(r, r);
  const double ridge = 1e-12 * std::max(a.diagonal().maxCoeff(), 1e-300);
  a.diagonal().array() += ridge;
  Vector step = Vector::Zero(k);
  step.head(r) = a.ldlt().solve(grad.head(r));
  if (!all_finite(step)) return false;
  const double cap = 20.0;
  const double norm = step.cwiseAbs().maxCoeff();
  if (norm > cap) step *= cap / norm;

  const double d0 = objective(base, weights, omega);
  const double slope = grad.dot(step);
  double t = 1.0;
  for (int h = 0; h < 60; ++h, t *= 0.5) {
    const Vector trial = omega + t * step;
    const double d1 = objective(base, weights, trial);
    const bool ascent = d1 >= d0 + 1e-4 * t * slope;
    bool flat_but_better = false;
    if (!ascent && std::abs(d1 - d0) <= 1e-13 * (1.0 + std::abs(d0))) {
      const Vector cm = exact_plan(base, trial).colwise().mean().transpose();
      flat_but_better = marginal_error(cm, weights) < current_error;
    }
    if (ascent || flat_but_better) {
      omega = trial;
      return true;
    }
  }
  return false;
}

}  // namespace

Vector tilt(const Vector& weights, const Vector& potentials) {
  const Vector logits = weights.array().log().matrix() + potentials;
  const double lse = log_sum_exp(logits);
  return (logits.array() - lse).exp().matrix();
}

Vector tilted_weights(const SinkhornSolution& solution) { return solution.tilted_weights; }

Matrix plan_from_potentials(const Matrix& log_q, const Vector& weights, const Vector& potentials) {
  require(log_q.cols() == weights.size() && weights.size() == potentials.size(), "plan shape mismatch");
  const Matrix base = log_q.rowwise() + weights.array().log().matrix().transpose();
  return exact_plan(base, potentials);
}

double semidual_objective(const Matrix& log_q, const Vector& weights, const Vector& potentials) {
  require(log_q.cols() == weights.size() && weights.size() == potentials.size(), "semi-dual shape mismatch");
  const Matrix base = log_q.rowwise() + weights.array().log().matrix().transpose();
  return objective(base, weights, potentials);
}

double relative_entropy(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "relative entropy shape mismatch");
  double s = 0.0;
  for (Index k = 0; k < a.size(); ++k)
    if (a(k) > 0.0) s += a(k) * (std::log(a(k)) - std::log(b(k)));
  return s;
}

SinkhornSolution solve_semidual(const Matrix& log_q, const Vector& weights, const SinkhornConfig& cfg,
                                const Vector* warm_start) {
  cfg.validate();
  const Index n = log_q.rows();
  const Index k = log_q.cols();
  require(n >= 1 && k >= 1, "semi-dual needs a non-empty cost matrix");
  require(weights.size() == k, "weights length must match cost columns");
  require((weights.array() > 0.0).all(), "target weights must be positive");
  require(all_finite(log_q), "cost matrix must be finite");

  SinkhornSolution sol;
  if (k == 1) {
    sol.potentials = Vector::Zero(1);
    sol.tilted_weights = Vector::Ones(1);
    sol.responsibilities = Responsibilities{Matrix::Ones(n, 1), ResponsibilityKind::Transport};
    sol.marginal_error = std::abs(1.0 - weights(0));
    sol.iterations = 1;
    sol.converged = sol.marginal_error <= cfg.tolerance;
    return sol;
  }

  const Vector log_a = weights.array().log().matrix();
  const Matrix base = log_q.rowwise() + log_a.transpose();

  Vector omega = Vector::Zero(k);
  if (warm_start && warm_start->size() == k && all_finite(*warm_start)) omega = *warm_start;
  auto pin = [&](Vector& w) {
    if (cfg.pin_last_potential) w.array() -= w(k - 1);
  };
  pin(omega);

  ScalingKernel kernel(base, omega);
  Vector col_mean(k);
  double err = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  bool newton_mode = false;
  int it = 0;
  while (it < cfg.max_iterations) {
    ++it;
    Vector log_c;
    if (kernel.column_means(omega, col_mean)) {
      log_c = col_mean.array().log().matrix();
    } else {
      log_c = log_column_means(base, omega);
      col_mean = log_c.array().exp().matrix();
    }
    err = marginal_error(col_mean, weights);
    history.push_back(err);
    if (err <= cfg.tolerance) break;
    if (it == cfg.max_iterations) break;

    // Linear convergence of plain scaling stalls when plans are close to
    // hard assignments; switch to Newton on the semi-dual then.
    if (!newton_mode && history.size() > 10 && err > 0.5 * history[history.size() - 11]) newton_mode = true;
    bool stepped = false;
    if (newton_mode) {
      stepped = newton_step(base, weights, omega, err);
      if (stepped) {
        pin(omega);
        if (kernel.needs_absorb(omega)) kernel.absorb(omega);
      }
    }
    if (!stepped) {
      omega += log_a - log_c;
      pin(omega);
      if (kernel.needs_absorb(omega)) kernel.absorb(omega);
    }
  }

  Matrix psi = exact_plan(base, omega);
  col_mean = psi.colwise().mean().transpose();
  sol.marginal_error = marginal_error(col_mean, weights);
  sol.potentials = omega;
  sol.tilted_weights = tilt(weights, omega);
  sol.responsibilities = Responsibilities{std::move(psi), ResponsibilityKind::Transport};
  sol.iterations = it;
  sol.converged = sol.marginal_error <= cfg.tolerance;
  return sol;
}

SinkhornSolution sinkhorn_estep(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg) {
  params.validate();
  const Matrix log_q = log_density_matrix(params, data.points);
  SinkhornSolution sol = solve_semidual(log_q, params.weights, cfg);
  if (!sol.converged) throw NonConvergence(sol.iterations, sol.marginal_error);
  return sol;
}

EntropicLoss loss_entropic_full(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg) {
  params.validate();
  const Matrix log_q = log_density_matrix(params, data.points);
  EntropicLoss out;
  out.solution = solve_semidual(log_q, params.weights, cfg);
  if (!out.solution.converged) throw NonConvergence(out.solution.iterations, out.solution.marginal_error);
  const Vector& tilted = out.solution.tilted_weights;
  out.value = neg_loglik_from_log_density(log_q, tilted) - relative_entropy(params.weights, tilted);
  out.semidual = semidual_objective(log_q, params.weights, out.solution.potentials);
  return out;
}

double loss_entropic(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg) {
  return loss_entropic_full(params, data, cfg).value;
}

ParamGradient gradient_given_responsibilities(const MixtureParams& params, const Dataset& data,
                                              const Matrix& psi) {
  const Index k = params.components();
  const Index d = params.dims();
  const double n = double(data.size());
  require(psi.rows() == data.size() && psi.cols() == k, "responsibility shape mismatch");
  const Matrix& var = params.variances.values;

  const Vector mass = psi.colwise().sum().transpose();
  const Matrix s1 = psi.transpose() * data.points;  // K x d
  ParamGradient g;
  g.locations = -((s1 - mass.asDiagonal() * params.locations).cwiseQuotient(var)) / n;

  g.variances = Matrix::Zero(k, d);
  if (!params.variances.fixed) {
    Matrix raw(k, d);
    for (Index c = 0; c < k; ++c) {
      const Matrix diff = data.points.rowwise() - params.locations.row(c);
      const RowVector s2 = psi.col(c).transpose() * diff.array().square().matrix();
      raw.row(c) = 0.5 * (mass(c) * var.row(c).cwiseInverse() - s2.cwiseQuotient(var.row(c).cwiseAbs2())) / n;
    }
    switch (params.variances.kind) {
      case VarianceKind::SphericalShared: g.variances.setConstant(raw.sum()); break;
      case VarianceKind::SphericalPerComponent:
        for (Index c = 0; c < k; ++c) g.variances.row(c).setConstant(raw.row(c).sum());
        break;
      case VarianceKind::DiagonalPerComponent: g.variances = raw; break;
    }
  }
  return g;
}

ParamGradient grad_loss_entropic(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg) {
  const SinkhornSolution sol = sinkhorn_estep(params, data, cfg);
  return gradient_given_responsibilities(params, data, sol.responsibilities.matrix);
}

ParamGradient grad_neg_loglik(const MixtureParams& params, const Dataset& data) {
  return gradient_given_responsibilities(params, data, vanilla_responsibilities(params, data).matrix);
}

Vector weight_gradient_from_potentials(const Vector& weights, const Vector& potentials) {
  const double centre = weights.dot(potentials);
  return (potentials.array() - centre - 1.0).matrix();
}

Vector grad_loss_weights(const MixtureParams& params, const Dataset& data, const SinkhornConfig& cfg) {
  const SinkhornSolution sol = sinkhorn_estep(params, data, cfg);
  return weight_gradient_from_potentials(params.weights, sol.potentials);
}

}  // namespace otclust
