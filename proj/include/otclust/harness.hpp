#pragma once

#include <map>
#include <string>
#include <vector>

#include "otclust/baselines.hpp"
#include "otclust/coclust.hpp"
#include "otclust/em.hpp"

namespace otclust {

/// Flat `key = value` configuration; list values are comma separated and
/// `#` starts a comment.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<long> get_ints(const std::string& key, const std::vector<long>& fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Variance regimes: i known shared spherical, ii known per-component
/// diagonal, iii estimated shared spherical, iv estimated diagonal.
enum class Regime { I, II, III, IV };
const char* regime_name(Regime r);
Regime parse_regime(const std::string& s);

struct WeightRegime {
  bool dirichlet = false;
  double gamma = 0.0;
  std::string name() const;
  static WeightRegime parse(const std::string& s);
};

struct Cell {
  Index k = 0, d = 0, n = 0;
  double sigma2 = 0.0;
  Regime regime = Regime::I;
  WeightRegime weights;
};

struct ExperimentSpec {
  std::vector<long> k{10};
  std::vector<long> d{2};
  std::vector<double> sigma2{0.1};
  std::vector<long> n{1000};
  std::vector<Regime> regimes{Regime::I};
  std::vector<WeightRegime> weight_regimes{WeightRegime{}};
  int replicates = 5;
  int seeds = 5;
  std::vector<std::string> methods{"kmeans", "em", "sem"};
  bool estimate_weights = false;
  std::string output = "results.csv";
  std::string summary_output;  // empty: derived from output
  std::uint64_t master_seed = 1;
  int threads = 1;
  bool timing = false;  // wall_ms is written as 0 unless enabled
  FitConfig fit;
  int kmeans_max_iter = 300;
  // selection sweep only
  int candidate_radius = 5;

  static ExperimentSpec from_config(const Config& cfg);
  std::vector<Cell> cells() const;
  void validate() const;
};

struct ResultRow {
  Index cell = 0;
  Cell coords;
  int replicate = 0;
  std::string method;
  int seed = 0;
  double error = 0.0, ari = 0.0, bic = 0.0, objective = 0.0, wall_ms = 0.0;
  int iterations = 0;
  bool converged = false;
  bool best_seed = false;
  std::uint64_t init_hash = 0;
};

/// Truth for one replicate of a cell: locations U(-1,1)^d, regime variances,
/// weights uniform or Dirichlet.
MixtureParams sample_truth(const Cell& cell, std::uint64_t seed);

std::uint64_t hash_matrix(const Matrix& m);

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);
std::string results_csv(const std::vector<ResultRow>& rows);
/// Median and quartiles of error and ARI per (cell, method), for per-seed and
/// best-of-seeds aggregation.
std::string summary_csv(const std::vector<ResultRow>& rows);

/// Median error per method over best-of-seeds rows.
std::map<std::string, double> median_best_error(const std::vector<ResultRow>& rows);

struct SpuriousTrial {
  double em_error = 0.0, sem_error = 0.0;
  bool em_in_region = false, sem_in_region = false;
  double em_balance = 0.0, sem_balance = 0.0;
};

struct SpuriousSummary {
  std::vector<SpuriousTrial> trials;
  double em_escape_fraction = 0.0;
  double sem_escape_fraction = 0.0;
  int sem_recovered = 0;  // center error < 0.5
  int em_stayed = 0;
};

/// Truth (0, D), (0, -D), (R, 0) with equal weights; both methods start at
/// (0, 0), (R, 0), (R, 0) plus jitter of at most 0.1 per coordinate.
SpuriousSummary run_spurious_demo(double D, double R, double sigma, Index n, int trials, std::uint64_t seed,
                                  const FitConfig& cfg = FitConfig{}, double region_radius = 1.0);

/// Exactly one centre within `radius` of the origin and two within `radius`
/// of (R, 0).
bool in_spurious_region(const MixtureParams& params, double R, double radius);
std::string spurious_csv(const SpuriousSummary& s);

struct SelectionRecord {
  Index cell = 0;
  int replicate = 0;
  std::string method;
  Index k = 0;
  Index k_hat = 0;
};

/// select_k over {K - r, ..., K + r} for every replicate, method in {em, sem}.
std::vector<SelectionRecord> run_selection_sweep(const ExperimentSpec& spec);
std::string selection_csv(const std::vector<SelectionRecord>& rows);
/// Counts of K - K_hat per method.
std::string selection_histogram_csv(const std::vector<SelectionRecord>& rows);

struct CoclusterCellResult {
  double sigma2 = 0.0;
  std::vector<double> vem_scores, svem_scores;
  double max_marginal_error = 0.0;
  int sinkhorn_nonconverged = 0;
};

struct CoclusterSweepSpec {
  Index n = 100, m = 100, k = 5, g = 5;
  std::vector<double> sigma2{1.0, 2.5, 5.0};
  double mean_range = 5.0;
  int replicates = 20;
  int inits = 5;
  std::uint64_t master_seed = 1;
  bool balanced = true;
  int threads = 1;
  CoclusterConfig fit;  // weights and variances are pinned to truth per replicate

  static CoclusterSweepSpec from_config(const Config& cfg);
};

std::vector<CoclusterCellResult> run_cocluster_sweep(const CoclusterSweepSpec& spec);
std::string cocluster_csv(const std::vector<CoclusterCellResult>& cells);

double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

}  // namespace otclust
