#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "otclust/baselines.hpp"
#include "otclust/harness.hpp"
#include "otclust/io.hpp"
#include "otclust/rng.hpp"

using namespace otclust;

namespace {

struct FitFlags {
  FitConfig cfg;
  bool no_pin = false;

  void add(CLI::App* app) {
    app->add_option("--max-outer-iterations", cfg.max_outer_iterations);
    app->add_option("--tolerance", cfg.param_change_tolerance, "L1 parameter change stopping threshold");
    app->add_flag("--update-variances", cfg.update_variances);
    app->add_flag("--update-weights", cfg.update_weights);
    app->add_option("--weight-step", cfg.weight_step);
    app->add_option("--weight-update-cadence", cfg.weight_update_cadence);
    app->add_option("--max-weight-iterations", cfg.max_weight_iterations);
    app->add_option("--max-backtracks", cfg.max_backtracks);
    app->add_flag("--record-trajectory", cfg.record_trajectory);
    app->add_option("--sinkhorn-tolerance", cfg.sinkhorn.tolerance);
    app->add_option("--sinkhorn-max-iterations", cfg.sinkhorn.max_iterations);
    app->add_flag("--no-pin-potential", no_pin, "leave the last potential free");
  }

  FitConfig get() const {
    FitConfig c = cfg;
    c.sinkhorn.pin_last_potential = !no_pin;
    return c;
  }
};

FitReport run_method(const std::string& method, const Dataset& data, const MixtureParams& init, const FitConfig& cfg,
                     int kmeans_iter) {
  if (method == "em") return em_fit(data, init, cfg);
  if (method == "sem") return sem_fit(data, init, cfg);
  if (method == "kmeans") {
    const KMeansResult km = lloyd_kmeans(data, init, kmeans_iter);
    FitReport r;
    r.final_params = km.params;
    r.iterations = km.iterations;
    r.converged = km.converged;
    r.responsibilities = vanilla_responsibilities(km.params, data);
    return r;
  }
  throw InvalidArgument("unknown method " + method);
}

Index argmax_row(const Matrix& m, Index i) {
  Index best = 0;
  m.row(i).maxCoeff(&best);
  return best;
}

std::string labels_csv(const Matrix& resp, const char* name) {
  std::string out = std::string(name) + ",label\n";
  for (Index i = 0; i < resp.rows(); ++i) out += std::to_string(i) + "," + std::to_string(argmax_row(resp, i)) + "\n";
  return out;
}

// Negative Gaussian log-likelihood of the matrix under hard row/column labels.
double hard_block_nll(const Matrix& y, const CoclusterFit& fit) {
  double s = 0.0;
  for (Index i = 0; i < y.rows(); ++i) {
    const Index k = argmax_row(fit.resp.z, i);
    for (Index j = 0; j < y.cols(); ++j) {
      const Index g = argmax_row(fit.resp.w, j);
      const double v = fit.model.variances(k, g), r = y(i, j) - fit.model.means(k, g);
      s += 0.5 * (kLog2Pi + std::log(v) + r * r / v);
    }
  }
  return s;
}

std::string derived_path(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + suffix + ".csv";
  return path.substr(0, dot) + suffix + path.substr(dot);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture clustering by EM and entropic optimal transport"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample a dataset from a mixture");
  std::string sim_truth, sim_data_out = "data.csv", sim_truth_out;
  long sim_k = 3, sim_d = 2, sim_n = 1000;
  double sim_sigma2 = 0.1;
  std::uint64_t sim_seed = 1;
  sim->add_option("--truth", sim_truth, "parameter JSON; otherwise locations are drawn from U(-1,1)");
  sim->add_option("-k,--components", sim_k);
  sim->add_option("-d,--dims", sim_d);
  sim->add_option("-n,--samples", sim_n);
  sim->add_option("--sigma2", sim_sigma2);
  sim->add_option("--seed", sim_seed);
  sim->add_option("-o,--out", sim_data_out, "dataset CSV");
  sim->add_option("--truth-out", sim_truth_out, "truth JSON");

  // fit
  auto* fit = app.add_subcommand("fit", "fit one mixture");
  std::string fit_data, fit_init, fit_method = "sem", fit_out = "report.json", fit_kind = "spherical_shared";
  long fit_k = 3;
  double fit_sigma2 = 1.0;
  std::uint64_t fit_seed = 1;
  int fit_kmeans_iter = 300;
  FitFlags fit_flags;
  fit->add_option("--data", fit_data)->required();
  fit->add_option("--method", fit_method)->check(CLI::IsMember({"em", "sem", "kmeans"}));
  fit->add_option("-k,--components", fit_k);
  fit->add_option("--init", fit_init, "initial parameter JSON; otherwise k-means++");
  fit->add_option("--init-sigma2", fit_sigma2, "variance of the k-means++ initialization");
  fit->add_option("--variance-kind", fit_kind)
      ->check(CLI::IsMember({"spherical_shared", "spherical", "diagonal"}));
  fit->add_option("--seed", fit_seed);
  fit->add_option("--kmeans-max-iterations", fit_kmeans_iter);
  fit->add_option("-o,--out", fit_out, "report JSON");
  fit_flags.add(fit);

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a sweep from a config file");
  std::string exp_config, exp_out, exp_summary;
  exp->add_option("config", exp_config)->required();
  exp->add_option("-o,--out", exp_out, "overrides `output`");
  exp->add_option("--summary", exp_summary, "overrides `summary_output`");

  // spurious
  auto* spu = app.add_subcommand("spurious", "three-component spurious-minimum demo");
  double spu_D = 3.0, spu_R = 9.0, spu_sigma = 1.0, spu_radius = 1.0;
  long spu_n = 20000;
  int spu_trials = 20;
  std::uint64_t spu_seed = 1;
  std::string spu_out = "spurious.csv";
  FitFlags spu_flags;
  spu->add_option("-D", spu_D);
  spu->add_option("-R", spu_R);
  spu->add_option("--sigma", spu_sigma);
  spu->add_option("-n,--samples", spu_n);
  spu->add_option("--trials", spu_trials);
  spu->add_option("--seed", spu_seed);
  spu->add_option("--region-radius", spu_radius);
  spu->add_option("-o,--out", spu_out);
  spu_flags.add(spu);

  // select-k
  auto* sel = app.add_subcommand("select-k", "choose K by BIC");
  std::string sel_config, sel_data, sel_method = "sem", sel_out = "selection.csv", sel_hist;
  long sel_kmin = 1, sel_kmax = 10;
  int sel_seeds = 5;
  double sel_sigma2 = 1.0;
  std::uint64_t sel_seed = 1;
  FitFlags sel_flags;
  sel->add_option("--config", sel_config, "sweep over a config grid");
  sel->add_option("--data", sel_data, "single dataset");
  sel->add_option("--method", sel_method)->check(CLI::IsMember({"em", "sem"}));
  sel->add_option("--k-min", sel_kmin);
  sel->add_option("--k-max", sel_kmax);
  sel->add_option("--seeds", sel_seeds);
  sel->add_option("--init-sigma2", sel_sigma2);
  sel->add_option("--seed", sel_seed);
  sel->add_option("-o,--out", sel_out);
  sel->add_option("--histogram", sel_hist, "histogram CSV (config mode)");
  sel_flags.add(sel);

  // twogauss
  auto* two = app.add_subcommand("twogauss", "population two-Gaussian analysis");
  double two_theta = 1.0, two_alpha = 0.7, two_lo = -5.0, two_hi = 5.0, two_step = 0.01;
  int two_order = 200, two_steps = 50;
  std::vector<double> two_starts{0.5, 1.0, 2.0};
  std::string two_csv = "loss_curves.csv", two_json = "iterates.json";
  two->add_option("--theta-star", two_theta);
  two->add_option("--alpha-star", two_alpha);
  two->add_option("--quadrature-order", two_order);
  two->add_option("--grid-min", two_lo);
  two->add_option("--grid-max", two_hi);
  two->add_option("--grid-step", two_step);
  two->add_option("--theta0", two_starts, "starting points for iterate traces");
  two->add_option("--steps", two_steps);
  two->add_option("--csv", two_csv);
  two->add_option("--json", two_json);

  // cocluster
  auto* co = app.add_subcommand("cocluster", "latent block model co-clustering");
  std::string co_data, co_config, co_method = "svem", co_model = "blocks.json", co_rows = "row_labels.csv",
                                  co_cols = "col_labels.csv", co_sweep_out = "cocluster.csv";
  long co_k = 3, co_g = 3;
  int co_inits = 5;
  std::uint64_t co_seed = 1;
  CoclusterConfig co_cfg;
  co->add_option("--data", co_data, "matrix CSV without header");
  co->add_option("--config", co_config, "synthetic sweep config");
  co->add_option("-k,--row-clusters", co_k);
  co->add_option("-g,--col-clusters", co_g);
  co->add_option("--method", co_method)->check(CLI::IsMember({"vem", "svem"}));
  co->add_option("--inits", co_inits, "random initializations; the best by hard-label likelihood is kept");
  co->add_option("--seed", co_seed);
  co->add_option("--cadence", co_cfg.weight_update_cadence);
  co->add_option("--max-outer-iterations", co_cfg.max_outer_iterations);
  co->add_option("--tolerance", co_cfg.tolerance);
  co->add_option("--sinkhorn-tolerance", co_cfg.sinkhorn.tolerance);
  co->add_option("--model-out", co_model);
  co->add_option("--rows-out", co_rows);
  co->add_option("--cols-out", co_cols);
  co->add_option("-o,--out", co_sweep_out, "sweep table (config mode)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      MixtureParams truth;
      if (!sim_truth.empty()) {
        truth = read_params_json(sim_truth);
      } else {
        Cell c;
        c.k = sim_k;
        c.d = sim_d;
        c.sigma2 = sim_sigma2;
        truth = sample_truth(c, derive_seed(sim_seed, {0}));
      }
      const Dataset data = sample_mixture(truth, sim_n, derive_seed(sim_seed, {1}));
      write_dataset_csv(sim_data_out, data);
      if (!sim_truth_out.empty()) write_json(sim_truth_out, to_json(truth));
    } else if (*fit) {
      const Dataset data = read_dataset_csv(fit_data);
      MixtureParams init;
      if (!fit_init.empty()) {
        init = read_params_json(fit_init);
      } else {
        init = kmeanspp_init(data, fit_k, fit_seed, fit_sigma2);
        const VarianceKind kind = parse_kind(fit_kind);
        if (kind == VarianceKind::SphericalPerComponent)
          init.variances = VarianceSpec::spherical(Vector::Constant(fit_k, fit_sigma2), data.dims());
        else if (kind == VarianceKind::DiagonalPerComponent)
          init.variances = VarianceSpec::diagonal(Matrix::Constant(fit_k, data.dims(), fit_sigma2));
      }
      FitReport r = run_method(fit_method, data, init, fit_flags.get(), fit_kmeans_iter);
      r.seed = fit_seed;
      Json j = to_json(r, fit_flags.cfg.record_trajectory);
      j["method"] = fit_method;
      j["neg_loglik"] = neg_loglik(r.final_params, data);
      j["bic"] = bic_score(r.final_params, data, fit_flags.cfg.update_weights);
      write_json(fit_out, j);
    } else if (*exp) {
      ExperimentSpec spec = ExperimentSpec::from_config(Config::load(exp_config));
      if (!exp_out.empty()) spec.output = exp_out;
      if (!exp_summary.empty()) spec.summary_output = exp_summary;
      spec.validate();
      const auto rows = run_experiment(spec);
      write_text(spec.output, results_csv(rows));
      write_text(spec.summary_output.empty() ? derived_path(spec.output, "_summary") : spec.summary_output,
                 summary_csv(rows));
    } else if (*spu) {
      const SpuriousSummary s =
          run_spurious_demo(spu_D, spu_R, spu_sigma, spu_n, spu_trials, spu_seed, spu_flags.get(), spu_radius);
      write_text(spu_out, spurious_csv(s));
      std::printf("em escape %.3f, sem escape %.3f, sem recovered %d/%d\n", s.em_escape_fraction,
                  s.sem_escape_fraction, s.sem_recovered, int(s.trials.size()));
    } else if (*sel) {
      if (sel_config.empty() == sel_data.empty()) throw InvalidArgument("select-k needs exactly one of --config, --data");
      if (!sel_config.empty()) {
        const ExperimentSpec spec = ExperimentSpec::from_config(Config::load(sel_config));
        const auto recs = run_selection_sweep(spec);
        write_text(sel_out, selection_csv(recs));
        write_text(sel_hist.empty() ? derived_path(sel_out, "_histogram") : sel_hist, selection_histogram_csv(recs));
      } else {
        require(sel_kmin >= 1 && sel_kmax >= sel_kmin, "invalid candidate range");
        const Dataset data = read_dataset_csv(sel_data);
        const FitConfig cfg = sel_flags.get();
        const FitProcedure proc = [&](const Dataset& d, Index k, std::uint64_t seed) {
          return run_method(sel_method, d, kmeanspp_init(d, k, seed, sel_sigma2), cfg, 300);
        };
        std::vector<Index> cands;
        for (long k = sel_kmin; k <= sel_kmax; ++k) cands.push_back(k);
        const SelectionResult res = select_k(data, cands, proc, sel_seeds, sel_seed, cfg.update_weights);
        std::string out = "K,best_ell,bic,failed\n";
        char buf[128];
        for (const auto& r : res.table) {
          std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%d\n", long(r.k), r.best_ell, r.bic, int(r.failed));
          out += buf;
        }
        write_text(sel_out, out);
        std::printf("K_hat %ld\n", long(res.k_hat));
      }
    } else if (*two) {
      const TwoGaussModel model(two_theta, two_alpha, two_order);
      write_text(two_csv, loss_curves_csv(loss_curves(model, uniform_grid(two_lo, two_hi, two_step))));
      Json j;
      j["theta_star"] = two_theta;
      j["alpha_star"] = two_alpha;
      j["traces"] = Json::array();
      for (double t0 : two_starts)
        for (Method m : {Method::EM, Method::SEM}) {
          Json t = to_json(population_iterates(model, m, t0, two_steps));
          t["theta0"] = t0;
          j["traces"].push_back(t);
        }
      write_json(two_json, j);
    } else if (*co) {
      if (co_config.empty() == co_data.empty()) throw InvalidArgument("cocluster needs exactly one of --config, --data");
      if (!co_config.empty()) {
        write_text(co_sweep_out, cocluster_csv(run_cocluster_sweep(CoclusterSweepSpec::from_config(Config::load(co_config)))));
      } else {
        require(co_inits >= 1, "inits must be >= 1");
        const Matrix y = read_matrix_csv(co_data);
        std::optional<CoclusterFit> best;
        double best_nll = std::numeric_limits<double>::infinity();
        for (int s = 0; s < co_inits; ++s) {
          const auto init = random_block_init(y.rows(), y.cols(), co_k, co_g, derive_seed(co_seed, {std::uint64_t(s)}));
          try {
            CoclusterFit f = co_method == "vem" ? vem_fit(y, co_k, co_g, init, co_cfg) : svem_fit(y, co_k, co_g, init, co_cfg);
            const double nll = hard_block_nll(y, f);
            if (nll < best_nll) {
              best_nll = nll;
              best = std::move(f);
            }
          } catch (const EmptyBlock& e) {
            std::fprintf(stderr, "init %d: %s\n", s, e.what());
          }
        }
        if (!best) throw InvalidArgument("every initialization degenerated");
        Json j = to_json(best->model);
        j["method"] = co_method;
        j["iterations"] = best->report.iterations;
        j["converged"] = best->report.converged;
        j["hard_neg_loglik"] = best_nll;
        write_json(co_model, j);
        write_text(co_rows, labels_csv(best->resp.z, "row"));
        write_text(co_cols, labels_csv(best->resp.w, "col"));
      }
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 1;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
