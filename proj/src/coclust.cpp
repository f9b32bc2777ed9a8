#include "otclust/coclust.hpp"

#include <algorithm>
#include <numeric>

#include "otclust/assignment.hpp"
#include "otclust/rng.hpp"

namespace otclust {

void BlockModel::validate() const {
  require(means.rows() >= 1 && means.cols() >= 1, "block model needs K, G >= 1");
  require(variances.rows() == means.rows() && variances.cols() == means.cols(), "block variance shape mismatch");
  require(row_weights.size() == means.rows() && col_weights.size() == means.cols(), "block weight shape mismatch");
  require((row_weights.array() > 0.0).all() && (col_weights.array() > 0.0).all(), "block weights must be positive");
  require(std::abs(row_weights.sum() - 1.0) <= 1e-12 && std::abs(col_weights.sum() - 1.0) <= 1e-12,
          "block weights must sum to 1");
  require((variances.array() >= kVarianceFloor).all(), "block variance below floor");
}

namespace {

std::vector<int> draw_labels(const Vector& weights, Index n, bool balanced, Rng& rng) {
  std::vector<int> labels(n);
  if (!balanced) {
    std::discrete_distribution<int> pick(weights.data(), weights.data() + weights.size());
    for (auto& l : labels) l = pick(rng);
    return labels;
  }
  // Largest-remainder class sizes, then a random order.
  const Index k = weights.size();
  std::vector<Index> count(k);
  std::vector<std::pair<double, Index>> remainder;
  Index used = 0;
  for (Index c = 0; c < k; ++c) {
    const double exact = weights(c) * double(n);
    count[c] = Index(std::floor(exact));
    used += count[c];
    remainder.push_back({exact - double(count[c]), c});
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (Index r = 0; r < n - used; ++r) ++count[remainder[r].second];
  Index pos = 0;
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < count[c]; ++r) labels[pos++] = int(c);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

Matrix one_hot_matrix(const std::vector<int>& labels, Index k) {
  Matrix out = Matrix::Zero(Index(labels.size()), k);
  for (Index i = 0; i < Index(labels.size()); ++i) out(i, labels[i]) = 1.0;
  return out;
}

Vector positive_simplex(Vector w) {
  w = w.cwiseMax(1e-300);
  return w / w.sum();
}

void check_blocks(const Vector& this_mass, const Vector& other_mass, bool rows_first) {
  for (Index a = 0; a < this_mass.size(); ++a)
    for (Index b = 0; b < other_mass.size(); ++b)
      if (!(this_mass(a) * other_mass(b) >= 1e-12)) throw rows_first ? EmptyBlock(a, b) : EmptyBlock(b, a);
}

struct SideState {
  bool transport = false;
  bool free_weights = false;
  bool free_variances = false;
  bool is_rows = true;
};

// Cost c_{ia} = 0.5 sum_b m_b (log s2_ab + (u_ib - 2 mu_ab ybar_ib + mu_ab^2) / s2_ab)
// for one side of the block model. `ybar`, `u` are this x other-classes.
Matrix side_cost(const Matrix& ybar, const Matrix& u, const Vector& other_mass, const Matrix& mu, const Matrix& var) {
  const Matrix a = var.cwiseInverse() * other_mass.asDiagonal();  // (this classes) x (other classes)
  const Matrix b = a.cwiseProduct(mu);
  Vector constant = (b.cwiseProduct(mu)).rowwise().sum() + var.array().log().matrix() * other_mass;
  Matrix c = u * a.transpose() - 2.0 * ybar * b.transpose();
  c.rowwise() += constant.transpose();
  return 0.5 * c;
}

// One of the two inner loops (3.2 / 3.4). `data` is oriented this x other.
void side_loop(const Matrix& data, const Matrix& data_sq, const Matrix& other_resp, Matrix& resp, Matrix& mu,
               Matrix& var, Vector& weights, const SideState& side, const CoclusterConfig& cfg, Vector& omega,
               int& update_counter, CoclusterReport& report) {
  const double n = double(data.rows());
  const Vector other_mass = other_resp.colwise().sum().transpose();
  const Matrix ybar = (data * other_resp) * other_mass.cwiseInverse().asDiagonal();
  const Matrix u = (data_sq * other_resp) * other_mass.cwiseInverse().asDiagonal();
  std::vector<double> surrogate;

  for (int it = 0; it < cfg.max_inner_iterations; ++it) {
    const Matrix cost = side_cost(ybar, u, other_mass, mu, var);
    bool use_transport = side.transport;
    if (side.transport && side.free_weights) {
      ++update_counter;
      if (update_counter % (cfg.weight_update_cadence + 1) == 0) use_transport = false;
    }
    if (use_transport) {
      SinkhornSolution sol = solve_semidual(-cost, weights, cfg.sinkhorn, &omega);
      ++report.transport_solves;
      if (!sol.converged) ++report.sinkhorn_nonconverged;
      report.max_marginal_error = std::max(report.max_marginal_error, sol.marginal_error);
      omega = sol.potentials;
      resp = std::move(sol.responsibilities.matrix);
    } else {
      Matrix logits = (-cost).rowwise() + weights.array().log().matrix().transpose();
      resp = row_softmax(logits);
    }

    const Vector mass = resp.colwise().sum().transpose();
    check_blocks(mass, other_mass, side.is_rows);
    const Vector old_w = weights;
    const Matrix old_mu = mu, old_var = var;
    if (side.free_weights) weights = positive_simplex(mass / n);
    mu = mass.cwiseInverse().asDiagonal() * (resp.transpose() * ybar);
    if (side.free_variances) {
      var = mass.cwiseInverse().asDiagonal() * (resp.transpose() * u) - mu.cwiseAbs2();
      var = var.cwiseMax(kVarianceFloor);
    }

    if (!side.transport && side.is_rows) {
      const Matrix c_new = side_cost(ybar, u, other_mass, mu, var);
      const Vector log_w = weights.array().log().matrix();
      double j = 0.0;
      for (Index i = 0; i < resp.rows(); ++i)
        for (Index a = 0; a < resp.cols(); ++a) {
          const double p = resp(i, a);
          if (p > 0.0) j += p * (c_new(i, a) - log_w(a) + std::log(p));
        }
      surrogate.push_back(j);
    }

    const double change = (weights - old_w).cwiseAbs().sum() + (mu - old_mu).cwiseAbs().sum() +
                          (var - old_var).cwiseAbs().sum();
    if (change < cfg.inner_tolerance) break;
  }
  if (!surrogate.empty()) report.row_surrogates.push_back(std::move(surrogate));
}

double model_change(const BlockModel& a, const BlockModel& b) {
  return (a.means - b.means).cwiseAbs().sum() + (a.variances - b.variances).cwiseAbs().sum() +
         (a.row_weights - b.row_weights).cwiseAbs().sum() + (a.col_weights - b.col_weights).cwiseAbs().sum();
}

CoclusterFit fit_impl(const Matrix& y, Index k, Index g, const BlockResponsibilities& init,
                      const CoclusterConfig& cfg, bool transport) {
  const Index n = y.rows(), m = y.cols();
  require(n >= 1 && m >= 1 && all_finite(y), "data matrix must be non-empty and finite");
  require(k >= 1 && k <= n && g >= 1 && g <= m, "need 1 <= K <= N and 1 <= G <= M");
  require(init.z.rows() == n && init.z.cols() == k && init.w.rows() == m && init.w.cols() == g,
          "initial responsibilities have the wrong shape");
  require(cfg.max_outer_iterations >= 1 && cfg.max_inner_iterations >= 1, "iteration caps must be >= 1");
  require(cfg.weight_update_cadence >= 1, "cadence must be >= 1");
  cfg.sinkhorn.validate();

  CoclusterFit fit;
  fit.resp = init;
  fit.model = block_statistics(y, init);
  if (cfg.row_weights) fit.model.row_weights = *cfg.row_weights;
  if (cfg.col_weights) fit.model.col_weights = *cfg.col_weights;
  if (cfg.variances) fit.model.variances = cfg.variances->cwiseMax(kVarianceFloor);
  fit.model.validate();

  SideState rows{transport, cfg.update_weights && !cfg.row_weights, cfg.update_variances && !cfg.variances, true};
  SideState cols{transport, cfg.update_weights && !cfg.col_weights, cfg.update_variances && !cfg.variances, false};

  const Matrix y_sq = y.cwiseAbs2();
  const Matrix yt = y.transpose(), yt_sq = y_sq.transpose();
  Vector omega_rows = Vector::Zero(k), omega_cols = Vector::Zero(g);
  int counter_rows = 0, counter_cols = 0;
  for (int outer = 0; outer < cfg.max_outer_iterations; ++outer) {
    const BlockModel before = fit.model;
    BlockModel& p = fit.model;
    side_loop(y, y_sq, fit.resp.w, fit.resp.z, p.means, p.variances, p.row_weights, rows, cfg, omega_rows,
              counter_rows, fit.report);
    Matrix mu_t = p.means.transpose(), var_t = p.variances.transpose();
    side_loop(yt, yt_sq, fit.resp.z, fit.resp.w, mu_t, var_t, p.col_weights, cols, cfg, omega_cols, counter_cols,
              fit.report);
    p.means = mu_t.transpose();
    p.variances = var_t.transpose();
    ++fit.report.iterations;
    if (model_change(p, before) < cfg.tolerance) {
      fit.report.converged = true;
      break;
    }
  }
  return fit;
}

double aligned_cost(const Matrix& fitted, const Matrix& truth, const std::vector<Index>& row_perm,
                    std::vector<Index>& col_perm) {
  const Index k = truth.rows(), g = truth.cols();
  Matrix cost = Matrix::Zero(g, g);
  for (Index gt = 0; gt < g; ++gt)
    for (Index gf = 0; gf < g; ++gf)
      for (Index r = 0; r < k; ++r) {
        const double d = fitted(row_perm[r], gf) - truth(r, gt);
        cost(gt, gf) += d * d;
      }
  col_perm = hungarian(cost);
  return assignment_cost(cost, col_perm);
}

BlockAlignment align_exact(const Matrix& fitted, const Matrix& truth) {
  const Index k = truth.rows();
  std::vector<Index> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  BlockAlignment best;
  best.score = std::numeric_limits<double>::infinity();
  do {
    std::vector<Index> cols;
    const double c = aligned_cost(fitted, truth, perm, cols);
    if (c < best.score) {
      best.score = c;
      best.row_perm = perm;
      best.col_perm = cols;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

BlockAlignment align_alternating(const Matrix& fitted, const Matrix& truth) {
  const Index k = truth.rows(), g = truth.cols();
  // Start from sorted row profiles, which ignore the column labelling.
  Matrix row_cost(k, k);
  for (Index a = 0; a < k; ++a) {
    RowVector ta = truth.row(a);
    std::sort(ta.data(), ta.data() + g);
    for (Index b = 0; b < k; ++b) {
      RowVector fb = fitted.row(b);
      std::sort(fb.data(), fb.data() + g);
      row_cost(a, b) = (ta - fb).squaredNorm();
    }
  }
  BlockAlignment out;
  out.exact = false;
  out.row_perm = hungarian(row_cost);
  out.score = aligned_cost(fitted, truth, out.row_perm, out.col_perm);
  for (int it = 0; it < 100; ++it) {
    Matrix rc = Matrix::Zero(k, k);
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b)
        for (Index c = 0; c < g; ++c) {
          const double d = fitted(b, out.col_perm[c]) - truth(a, c);
          rc(a, b) += d * d;
        }
    std::vector<Index> rows = hungarian(rc), cols;
    const double s = aligned_cost(fitted, truth, rows, cols);
    if (!(s < out.score - 1e-14)) break;
    out.score = s;
    out.row_perm = std::move(rows);
    out.col_perm = std::move(cols);
  }
  return out;
}

}  // namespace

BlockData sample_block_data(const BlockModel& model, Index n, Index m, std::uint64_t seed, bool balanced) {
  model.validate();
  require(n >= model.row_classes() && m >= model.col_classes(), "need n >= K and m >= G");
  Rng rng = make_rng(seed);
  BlockData out;
  out.row_labels = draw_labels(model.row_weights, n, balanced, rng);
  out.col_labels = draw_labels(model.col_weights, m, balanced, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  out.values.resize(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      const int a = out.row_labels[i], b = out.col_labels[j];
      out.values(i, j) = model.means(a, b) + std::sqrt(model.variances(a, b)) * normal(rng);
    }
  return out;
}

BlockResponsibilities one_hot(const std::vector<int>& row_labels, const std::vector<int>& col_labels, Index k,
                              Index g) {
  return BlockResponsibilities{one_hot_matrix(row_labels, k), one_hot_matrix(col_labels, g)};
}

BlockResponsibilities random_block_init(Index n, Index m, Index k, Index g, std::uint64_t seed) {
  require(k >= 1 && k <= n && g >= 1 && g <= m, "need 1 <= K <= N and 1 <= G <= M");
  Rng rng = make_rng(seed);
  auto draw = [&](Index count, Index classes) {
    std::uniform_int_distribution<int> pick(0, int(classes) - 1);
    std::vector<int> labels(count);
    for (int attempt = 0;; ++attempt) {
      std::vector<char> seen(classes, 0);
      for (auto& l : labels) seen[l = pick(rng)] = 1;
      if (std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; })) return labels;
      if (attempt == 1000) {
        // Fall back to a random balanced partition.
        for (Index i = 0; i < count; ++i) labels[i] = int(i % classes);
        std::shuffle(labels.begin(), labels.end(), rng);
        return labels;
      }
    }
  };
  const std::vector<int> rows = draw(n, k);
  const std::vector<int> cols = draw(m, g);
  return one_hot(rows, cols, k, g);
}

BlockModel block_statistics(const Matrix& y, const BlockResponsibilities& resp) {
  const Matrix& z = resp.z;
  const Matrix& w = resp.w;
  require(z.rows() == y.rows() && w.rows() == y.cols(), "responsibility shape mismatch");
  const Vector zm = z.colwise().sum().transpose();
  const Vector wm = w.colwise().sum().transpose();
  check_blocks(zm, wm, true);
  const Matrix mass = zm * wm.transpose();
  BlockModel out;
  out.row_weights = positive_simplex(zm / double(y.rows()));
  out.col_weights = positive_simplex(wm / double(y.cols()));
  out.means = (z.transpose() * y * w).cwiseQuotient(mass);
  out.variances = (z.transpose() * y.cwiseAbs2() * w).cwiseQuotient(mass) - out.means.cwiseAbs2();
  out.variances = out.variances.cwiseMax(kVarianceFloor);
  return out;
}

CoclusterFit vem_fit(const Matrix& y, Index k, Index g, const BlockResponsibilities& init,
                     const CoclusterConfig& cfg) {
  return fit_impl(y, k, g, init, cfg, false);
}

CoclusterFit svem_fit(const Matrix& y, Index k, Index g, const BlockResponsibilities& init,
                      const CoclusterConfig& cfg) {
  return fit_impl(y, k, g, init, cfg, true);
}

BlockAlignment block_alignment(const BlockModel& fitted, const BlockModel& truth) {
  require(fitted.means.rows() == truth.means.rows() && fitted.means.cols() == truth.means.cols(),
          "block score needs equal K and G");
  const Index k = truth.means.rows(), g = truth.means.cols();
  BlockAlignment out;
  if (std::min(k, g) <= 7) {
    if (k <= g) {
      out = align_exact(fitted.means, truth.means);
    } else {
      out = align_exact(fitted.means.transpose(), truth.means.transpose());
      std::swap(out.row_perm, out.col_perm);
    }
  } else {
    out = align_alternating(fitted.means, truth.means);
  }
  out.score /= double(k * g);
  return out;
}

double block_score(const BlockModel& fitted, const BlockModel& truth) { return block_alignment(fitted, truth).score; }

}  // namespace otclust
