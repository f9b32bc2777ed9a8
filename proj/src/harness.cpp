#include "otclust/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "otclust/rng.hpp"

namespace otclust {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Runs fn(0..count-1) on `threads` workers; each index is visited once.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

using Clock = std::chrono::steady_clock;

Vector dirichlet(Index k, double gamma, Rng& rng) {
  std::gamma_distribution<double> g(gamma, 1.0);
  Vector w(k);
  for (Index i = 0; i < k; ++i) w(i) = g(rng);
  w = w.cwiseMax(1e-300);
  return w / w.sum();
}

// Starting parameters shared by EM and SEM for one seed.
MixtureParams regime_init(const Matrix& centers, const Cell& cell, const MixtureParams& truth, bool estimate_weights) {
  const Index k = centers.rows(), d = centers.cols();
  MixtureParams init;
  init.locations = centers;
  switch (cell.regime) {
    case Regime::I: init.variances = VarianceSpec::spherical_shared(k, d, cell.sigma2, true); break;
    case Regime::II: init.variances = VarianceSpec::diagonal(truth.variances.values, true); break;
    case Regime::III: init.variances = VarianceSpec::spherical_shared(k, d, 1.0, false); break;
    case Regime::IV: init.variances = VarianceSpec::diagonal(Matrix::Ones(k, d), false); break;
  }
  init.weights = estimate_weights ? Vector::Constant(k, 1.0 / double(k)) : truth.weights;
  return init;
}

bool regime_estimates_variance(Regime r) { return r == Regime::III || r == Regime::IV; }

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    return std::stod(get(key, ""));
  } catch (const std::exception&) {
    throw InvalidArgument("config key '" + key + "' is not a number");
  }
}

long Config::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  try {
    return std::stol(get(key, ""));
  } catch (const std::exception&) {
    throw InvalidArgument("config key '" + key + "' is not an integer");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key, "");
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config key '" + key + "' is not a boolean");
}

std::vector<std::string> Config::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
  return has(key) ? split_list(get(key, "")) : fallback;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(get(key, ""))) {
    try {
      out.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw InvalidArgument("config key '" + key + "' has a non-numeric entry");
    }
  }
  return out;
}

std::vector<long> Config::get_ints(const std::string& key, const std::vector<long>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<long> out;
  for (const auto& s : split_list(get(key, ""))) {
    try {
      out.push_back(std::stol(s));
    } catch (const std::exception&) {
      throw InvalidArgument("config key '" + key + "' has a non-integer entry");
    }
  }
  return out;
}

const char* regime_name(Regime r) {
  switch (r) {
    case Regime::I: return "i";
    case Regime::II: return "ii";
    case Regime::III: return "iii";
    case Regime::IV: return "iv";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "i") return Regime::I;
  if (s == "ii") return Regime::II;
  if (s == "iii") return Regime::III;
  if (s == "iv") return Regime::IV;
  throw InvalidArgument("unknown regime '" + s + "'");
}

std::string WeightRegime::name() const { return dirichlet ? "dirichlet:" + fmt(gamma) : "uniform"; }

WeightRegime WeightRegime::parse(const std::string& s) {
  if (s == "uniform") return WeightRegime{};
  const std::string prefix = "dirichlet:";
  if (s.rfind(prefix, 0) == 0) {
    WeightRegime w;
    w.dirichlet = true;
    try {
      w.gamma = std::stod(s.substr(prefix.size()));
    } catch (const std::exception&) {
      throw InvalidArgument("bad dirichlet concentration in '" + s + "'");
    }
    require(w.gamma > 0.0, "dirichlet concentration must be positive");
    return w;
  }
  throw InvalidArgument("unknown weight regime '" + s + "'");
}

ExperimentSpec ExperimentSpec::from_config(const Config& c) {
  ExperimentSpec s;
  s.k = c.get_ints("K", s.k);
  s.d = c.get_ints("d", s.d);
  s.sigma2 = c.get_doubles("sigma2", s.sigma2);
  s.n = c.get_ints("N", s.n);
  if (c.has("regime")) {
    s.regimes.clear();
    for (const auto& r : c.get_list("regime", {})) s.regimes.push_back(parse_regime(r));
  }
  if (c.has("weights")) {
    s.weight_regimes.clear();
    for (const auto& w : c.get_list("weights", {})) s.weight_regimes.push_back(WeightRegime::parse(w));
  }
  s.replicates = int(c.get_int("replicates", s.replicates));
  s.seeds = int(c.get_int("seeds", s.seeds));
  s.methods = c.get_list("methods", s.methods);
  s.estimate_weights = c.get_bool("estimate_weights", s.estimate_weights);
  s.output = c.get("output", s.output);
  s.summary_output = c.get("summary_output", s.summary_output);
  s.master_seed = std::uint64_t(c.get_int("master_seed", long(s.master_seed)));
  s.threads = int(c.get_int("threads", s.threads));
  s.timing = c.get_bool("timing", s.timing);
  s.fit.max_outer_iterations = int(c.get_int("max_outer_iterations", s.fit.max_outer_iterations));
  s.fit.param_change_tolerance = c.get_double("tolerance", s.fit.param_change_tolerance);
  s.fit.sinkhorn.tolerance = c.get_double("sinkhorn_tolerance", s.fit.sinkhorn.tolerance);
  s.fit.sinkhorn.max_iterations = int(c.get_int("sinkhorn_max_iterations", s.fit.sinkhorn.max_iterations));
  s.fit.weight_step = c.get_double("weight_step", s.fit.weight_step);
  s.kmeans_max_iter = int(c.get_int("kmeans_max_iterations", s.kmeans_max_iter));
  s.candidate_radius = int(c.get_int("candidate_radius", s.candidate_radius));
  s.validate();
  return s;
}

void ExperimentSpec::validate() const {
  require(!k.empty() && !d.empty() && !sigma2.empty() && !n.empty() && !regimes.empty() && !weight_regimes.empty(),
          "every grid axis needs at least one value");
  for (long v : k) require(v >= 1, "K must be >= 1");
  for (long v : d) require(v >= 1, "d must be >= 1");
  for (long v : n) require(v >= 1, "N must be >= 1");
  for (double v : sigma2) require(v >= kVarianceFloor, "sigma2 below the variance floor");
  require(replicates >= 1 && seeds >= 1, "replicates and seeds must be >= 1");
  require(!methods.empty(), "methods must be non-empty");
  for (const auto& m : methods) require(m == "kmeans" || m == "em" || m == "sem", "unknown method");
  require(threads >= 1, "threads must be >= 1");
  require(candidate_radius >= 0, "candidate_radius must be >= 0");
  fit.validate();
}

std::vector<Cell> ExperimentSpec::cells() const {
  std::vector<Cell> out;
  for (long kk : k)
    for (long dd : d)
      for (double s2 : sigma2)
        for (long nn : n)
          for (Regime r : regimes)
            for (const auto& w : weight_regimes) out.push_back(Cell{kk, dd, nn, s2, r, w});
  return out;
}

MixtureParams sample_truth(const Cell& cell, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  MixtureParams p;
  p.locations.resize(cell.k, cell.d);
  for (Index i = 0; i < p.locations.size(); ++i) p.locations.data()[i] = unit(rng);
  if (cell.regime == Regime::II || cell.regime == Regime::IV) {
    std::uniform_real_distribution<double> spread(0.5 * cell.sigma2, 1.5 * cell.sigma2);
    Matrix v(cell.k, cell.d);
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = std::max(spread(rng), kVarianceFloor);
    p.variances = VarianceSpec::diagonal(v, true);
  } else {
    p.variances = VarianceSpec::spherical_shared(cell.k, cell.d, cell.sigma2, true);
  }
  p.weights = cell.weights.dirichlet ? dirichlet(cell.k, cell.weights.gamma, rng)
                                     : Vector::Constant(cell.k, 1.0 / double(cell.k));
  return p;
}

std::uint64_t hash_matrix(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
  for (std::size_t i = 0; i < std::size_t(m.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto cells = spec.cells();
  const std::size_t tasks = cells.size() * std::size_t(spec.replicates);
  std::vector<std::vector<ResultRow>> per_task(tasks);

  parallel_for(tasks, spec.threads, [&](std::size_t t) {
    const Index ci = Index(t / spec.replicates);
    const int rep = int(t % spec.replicates);
    const Cell& cell = cells[ci];
    const std::uint64_t data_seed = derive_seed(spec.master_seed, {std::uint64_t(ci), std::uint64_t(rep), 0});
    const MixtureParams truth = sample_truth(cell, data_seed);
    const Dataset data = sample_mixture(truth, cell.n, derive_seed(data_seed, {1}));

    FitConfig fcfg = spec.fit;
    fcfg.update_variances = regime_estimates_variance(cell.regime);
    fcfg.update_weights = spec.estimate_weights;
    std::vector<ResultRow>& rows = per_task[t];
    for (int s = 0; s < spec.seeds; ++s) {
      const std::uint64_t init_seed =
          derive_seed(spec.master_seed, {std::uint64_t(ci), std::uint64_t(rep), std::uint64_t(s) + 1});
      const Index k = std::min<Index>(cell.k, data.size());
      const MixtureParams seeded = kmeanspp_init(data, k, init_seed);
      const MixtureParams init = regime_init(seeded.locations, cell, truth, spec.estimate_weights);
      const std::uint64_t ihash = hash_matrix(init.locations);
      for (const auto& method : spec.methods) {
        ResultRow row;
        row.cell = ci;
        row.coords = cell;
        row.replicate = rep;
        row.method = method;
        row.seed = s;
        row.init_hash = ihash;
        const auto start = Clock::now();
        try {
          MixtureParams fitted;
          std::vector<int> labels;
          if (method == "kmeans") {
            KMeansResult km = lloyd_kmeans(data, init, spec.kmeans_max_iter);
            fitted = km.params;
            labels = km.labels;
            row.objective = km.inertia;
            row.iterations = km.iterations;
            row.converged = km.converged;
          } else {
            FitReport r = method == "em" ? em_fit(data, init, fcfg) : sem_fit(data, init, fcfg);
            fitted = r.final_params;
            labels = r.responsibilities.hard_labels();
            row.objective = neg_loglik(fitted, data);
            row.iterations = r.iterations;
            row.converged = r.converged;
          }
          row.error = center_error(fitted, truth);
          row.ari = adjusted_rand_index(labels, *data.true_labels);
          row.bic = bic_score(fitted, data, spec.estimate_weights && method != "kmeans");
        } catch (const std::exception&) {
          row.error = row.ari = row.bic = row.objective = std::numeric_limits<double>::quiet_NaN();
          row.converged = false;
        }
        if (spec.timing) row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        rows.push_back(row);
      }
    }
    // Best seed per method: inertia for k-means, in-sample l otherwise.
    for (const auto& method : spec.methods) {
      ResultRow* best = nullptr;
      for (auto& r : rows)
        if (r.method == method && !std::isnan(r.objective) && (!best || r.objective < best->objective)) best = &r;
      if (best) best->best_seed = true;
    }
  });

  std::vector<ResultRow> out;
  for (auto& rows : per_task) {
    std::stable_sort(rows.begin(), rows.end(), [&](const ResultRow& a, const ResultRow& b) {
      const auto ia = std::find(spec.methods.begin(), spec.methods.end(), a.method);
      const auto ib = std::find(spec.methods.begin(), spec.methods.end(), b.method);
      return ia != ib ? ia < ib : a.seed < b.seed;
    });
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "cell,K,d,sigma2,N,regime,weights,replicate,method,seed,error,ari,bic,objective,iterations,converged,"
         "best_seed,wall_ms,init_hash\n";
  for (const auto& r : rows) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.init_hash));
    out << r.cell << ',' << r.coords.k << ',' << r.coords.d << ',' << fmt(r.coords.sigma2) << ',' << r.coords.n << ','
        << regime_name(r.coords.regime) << ',' << r.coords.weights.name() << ',' << r.replicate << ',' << r.method
        << ',' << r.seed << ',' << fmt(r.error) << ',' << fmt(r.ari) << ',' << fmt(r.bic) << ',' << fmt(r.objective)
        << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << (r.best_seed ? 1 : 0) << ','
        << fmt(r.wall_ms) << ',' << hash << '\n';
  }
  return out.str();
}

double quantile(std::vector<double> v, double q) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

std::string summary_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << "cell,K,d,sigma2,N,regime,weights,method,aggregation,count,median_error,q25_error,q75_error,median_ari\n";
  std::map<Index, Cell> coords;
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    coords[r.cell] = r.coords;
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  for (const auto& [ci, cell] : coords)
    for (const auto& m : methods)
      for (int agg = 0; agg < 2; ++agg) {
        std::vector<double> err, ari;
        for (const auto& r : rows)
          if (r.cell == ci && r.method == m && (agg == 0 || r.best_seed)) {
            err.push_back(r.error);
            ari.push_back(r.ari);
          }
        if (err.empty()) continue;
        out << ci << ',' << cell.k << ',' << cell.d << ',' << fmt(cell.sigma2) << ',' << cell.n << ','
            << regime_name(cell.regime) << ',' << cell.weights.name() << ',' << m << ','
            << (agg == 0 ? "per_seed" : "best_of_seeds") << ',' << err.size() << ',' << fmt(median(err)) << ','
            << fmt(quantile(err, 0.25)) << ',' << fmt(quantile(err, 0.75)) << ',' << fmt(median(ari)) << '\n';
      }
  return out.str();
}

std::map<std::string, double> median_best_error(const std::vector<ResultRow>& rows) {
  std::map<std::string, std::vector<double>> by;
  for (const auto& r : rows)
    if (r.best_seed) by[r.method].push_back(r.error);
  std::map<std::string, double> out;
  for (auto& [m, v] : by) out[m] = median(v);
  return out;
}

bool in_spurious_region(const MixtureParams& params, double R, double radius) {
  require(params.dims() == 2, "spurious region is defined in two dimensions");
  int near_origin = 0, near_far = 0;
  for (Index k = 0; k < params.components(); ++k) {
    const Eigen::Vector2d c = params.locations.row(k).transpose();
    if (c.norm() < radius) ++near_origin;
    if ((c - Eigen::Vector2d(R, 0.0)).norm() < radius) ++near_far;
  }
  return near_origin == 1 && near_far == 2;
}

SpuriousSummary run_spurious_demo(double D, double R, double sigma, Index n, int trials, std::uint64_t seed,
                                  const FitConfig& cfg, double region_radius) {
  require(sigma > 0.0 && n >= 1 && trials >= 1, "invalid spurious-demo arguments");
  Matrix centers(3, 2);
  centers << 0.0, D, 0.0, -D, R, 0.0;
  const MixtureParams truth = MixtureParams::isotropic(centers, sigma * sigma);
  FitConfig fcfg = cfg;
  fcfg.update_weights = false;
  fcfg.update_variances = false;

  SpuriousSummary s;
  s.trials.resize(trials);
  for (int t = 0; t < trials; ++t) {
    const Dataset data = sample_mixture(truth, n, derive_seed(seed, {std::uint64_t(t), 0}));
    Rng rng = make_rng(derive_seed(seed, {std::uint64_t(t), 1}));
    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    Matrix start(3, 2);
    start << 0.0, 0.0, R, 0.0, R, 0.0;
    for (Index i = 0; i < start.size(); ++i) start.data()[i] += jitter(rng);
    const MixtureParams init = MixtureParams::isotropic(start, sigma * sigma);

    SpuriousTrial& tr = s.trials[t];
    const FitReport em = em_fit(data, init, fcfg);
    const FitReport sem = sem_fit(data, init, fcfg);
    tr.em_error = center_error(em.final_params, truth);
    tr.sem_error = center_error(sem.final_params, truth);
    tr.em_in_region = in_spurious_region(em.final_params, R, region_radius);
    tr.sem_in_region = in_spurious_region(sem.final_params, R, region_radius);
    tr.em_balance = balance_residual(data, em.responsibilities.matrix, em.final_params.weights);
    tr.sem_balance = balance_residual(data, sem.responsibilities.matrix, sem.final_params.weights);
    if (!tr.em_in_region) s.em_escape_fraction += 1.0;
    if (!tr.sem_in_region) s.sem_escape_fraction += 1.0;
    if (tr.sem_error < 0.5) ++s.sem_recovered;
    if (tr.em_in_region) ++s.em_stayed;
  }
  s.em_escape_fraction /= double(trials);
  s.sem_escape_fraction /= double(trials);
  return s;
}

std::string spurious_csv(const SpuriousSummary& s) {
  std::ostringstream out;
  out << "trial,em_error,sem_error,em_in_region,sem_in_region,em_balance,sem_balance\n";
  for (std::size_t t = 0; t < s.trials.size(); ++t) {
    const auto& r = s.trials[t];
    out << t << ',' << fmt(r.em_error) << ',' << fmt(r.sem_error) << ',' << int(r.em_in_region) << ','
        << int(r.sem_in_region) << ',' << fmt(r.em_balance) << ',' << fmt(r.sem_balance) << '\n';
  }
  return out.str();
}

std::vector<SelectionRecord> run_selection_sweep(const ExperimentSpec& spec) {
  spec.validate();
  const auto cells = spec.cells();
  const std::size_t tasks = cells.size() * std::size_t(spec.replicates);
  std::vector<std::vector<SelectionRecord>> per_task(tasks);
  std::vector<std::string> methods;
  for (const auto& m : spec.methods)
    if (m == "em" || m == "sem") methods.push_back(m);
  require(!methods.empty(), "selection sweep needs em and/or sem");

  parallel_for(tasks, spec.threads, [&](std::size_t t) {
    const Index ci = Index(t / spec.replicates);
    const int rep = int(t % spec.replicates);
    const Cell& cell = cells[ci];
    const std::uint64_t data_seed = derive_seed(spec.master_seed, {std::uint64_t(ci), std::uint64_t(rep), 0});
    const MixtureParams truth = sample_truth(cell, data_seed);
    const Dataset data = sample_mixture(truth, cell.n, derive_seed(data_seed, {1}));
    std::vector<Index> candidates;
    for (Index k = std::max<Index>(1, cell.k - spec.candidate_radius); k <= cell.k + spec.candidate_radius; ++k)
      if (k <= data.size()) candidates.push_back(k);

    FitConfig fcfg = spec.fit;
    fcfg.update_variances = regime_estimates_variance(cell.regime);
    fcfg.update_weights = spec.estimate_weights;
    const std::uint64_t select_seed = derive_seed(spec.master_seed, {std::uint64_t(ci), std::uint64_t(rep), 2});
    for (const auto& method : methods) {
      FitProcedure fit = [&](const Dataset& d, Index k, std::uint64_t seed) {
        const MixtureParams seeded = kmeanspp_init(d, k, seed);
        MixtureParams init;
        init.locations = seeded.locations;
        const Index dim = d.dims();
        switch (cell.regime) {
          case Regime::I:
          case Regime::II: init.variances = VarianceSpec::spherical_shared(k, dim, cell.sigma2, true); break;
          case Regime::III: init.variances = VarianceSpec::spherical_shared(k, dim, 1.0, false); break;
          case Regime::IV: init.variances = VarianceSpec::diagonal(Matrix::Ones(k, dim), false); break;
        }
        init.weights = Vector::Constant(k, 1.0 / double(k));
        return method == "em" ? em_fit(d, init, fcfg) : sem_fit(d, init, fcfg);
      };
      const SelectionResult r = select_k(data, candidates, fit, spec.seeds, select_seed, spec.estimate_weights);
      per_task[t].push_back(SelectionRecord{ci, rep, method, cell.k, r.k_hat});
    }
  });

  std::vector<SelectionRecord> out;
  for (auto& v : per_task) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::string selection_csv(const std::vector<SelectionRecord>& rows) {
  std::ostringstream out;
  out << "cell,replicate,method,K,K_hat,K_minus_K_hat\n";
  for (const auto& r : rows)
    out << r.cell << ',' << r.replicate << ',' << r.method << ',' << r.k << ',' << r.k_hat << ',' << (r.k - r.k_hat)
        << '\n';
  return out.str();
}

std::string selection_histogram_csv(const std::vector<SelectionRecord>& rows) {
  std::map<std::pair<std::string, Index>, int> counts;
  for (const auto& r : rows) ++counts[{r.method, r.k - r.k_hat}];
  std::ostringstream out;
  out << "method,K_minus_K_hat,count\n";
  for (const auto& [key, c] : counts) out << key.first << ',' << key.second << ',' << c << '\n';
  return out.str();
}

CoclusterSweepSpec CoclusterSweepSpec::from_config(const Config& c) {
  CoclusterSweepSpec s;
  s.n = c.get_int("N", s.n);
  s.m = c.get_int("M", s.m);
  s.k = c.get_int("K", s.k);
  s.g = c.get_int("G", s.g);
  s.sigma2 = c.get_doubles("sigma2", s.sigma2);
  s.mean_range = c.get_double("mean_range", s.mean_range);
  s.replicates = int(c.get_int("replicates", s.replicates));
  s.inits = int(c.get_int("inits", s.inits));
  s.master_seed = std::uint64_t(c.get_int("master_seed", long(s.master_seed)));
  s.balanced = c.get_bool("balanced", s.balanced);
  s.threads = int(c.get_int("threads", s.threads));
  s.fit.max_outer_iterations = int(c.get_int("max_outer_iterations", s.fit.max_outer_iterations));
  s.fit.sinkhorn.tolerance = c.get_double("sinkhorn_tolerance", s.fit.sinkhorn.tolerance);
  require(s.replicates >= 1 && s.inits >= 1 && s.threads >= 1, "invalid cocluster sweep counts");
  return s;
}

std::vector<CoclusterCellResult> run_cocluster_sweep(const CoclusterSweepSpec& spec) {
  std::vector<CoclusterCellResult> out(spec.sigma2.size());
  const std::size_t tasks = spec.sigma2.size() * std::size_t(spec.replicates);
  struct TaskResult {
    std::vector<double> vem, svem;
    double max_err = 0.0;
    int nonconv = 0;
  };
  std::vector<TaskResult> results(tasks);
  parallel_for(tasks, spec.threads, [&](std::size_t t) {
    const std::size_t ci = t / spec.replicates;
    const int rep = int(t % spec.replicates);
    const double s2 = spec.sigma2[ci];
    const std::uint64_t base = derive_seed(spec.master_seed, {std::uint64_t(ci), std::uint64_t(rep), 0});
    Rng rng = make_rng(base);
    std::uniform_real_distribution<double> u(-spec.mean_range, spec.mean_range);
    BlockModel truth;
    truth.means.resize(spec.k, spec.g);
    for (Index i = 0; i < truth.means.size(); ++i) truth.means.data()[i] = u(rng);
    truth.variances = Matrix::Constant(spec.k, spec.g, s2);
    truth.row_weights = Vector::Constant(spec.k, 1.0 / double(spec.k));
    truth.col_weights = Vector::Constant(spec.g, 1.0 / double(spec.g));
    const BlockData data = sample_block_data(truth, spec.n, spec.m, derive_seed(base, {1}), spec.balanced);

    CoclusterConfig cfg = spec.fit;
    cfg.row_weights = truth.row_weights;
    cfg.col_weights = truth.col_weights;
    cfg.variances = truth.variances;
    TaskResult& res = results[t];
    for (int s = 0; s < spec.inits; ++s) {
      const auto init = random_block_init(spec.n, spec.m, spec.k, spec.g,
                                          derive_seed(spec.master_seed, {std::uint64_t(ci), std::uint64_t(rep),
                                                                         std::uint64_t(s) + 1}));
      auto score = [&](auto&& fitter, std::vector<double>& sink) {
        try {
          const CoclusterFit f = fitter(data.values, spec.k, spec.g, init, cfg);
          sink.push_back(block_score(f.model, truth));
          res.max_err = std::max(res.max_err, f.report.max_marginal_error);
          res.nonconv += f.report.sinkhorn_nonconverged;
        } catch (const std::exception&) {
          sink.push_back(std::numeric_limits<double>::quiet_NaN());
        }
      };
      score(vem_fit, res.vem);
      score(svem_fit, res.svem);
    }
  });
  for (std::size_t ci = 0; ci < spec.sigma2.size(); ++ci) {
    out[ci].sigma2 = spec.sigma2[ci];
    for (int rep = 0; rep < spec.replicates; ++rep) {
      const TaskResult& r = results[ci * spec.replicates + rep];
      out[ci].vem_scores.insert(out[ci].vem_scores.end(), r.vem.begin(), r.vem.end());
      out[ci].svem_scores.insert(out[ci].svem_scores.end(), r.svem.begin(), r.svem.end());
      out[ci].max_marginal_error = std::max(out[ci].max_marginal_error, r.max_err);
      out[ci].sinkhorn_nonconverged += r.nonconv;
    }
  }
  return out;
}

std::string cocluster_csv(const std::vector<CoclusterCellResult>& cells) {
  std::ostringstream out;
  out << "sigma2,runs,median_vem,median_svem,q25_vem,q75_vem,q25_svem,q75_svem,max_marginal_error,"
         "sinkhorn_nonconverged\n";
  for (const auto& c : cells)
    out << fmt(c.sigma2) << ',' << c.vem_scores.size() << ',' << fmt(median(c.vem_scores)) << ','
        << fmt(median(c.svem_scores)) << ',' << fmt(quantile(c.vem_scores, 0.25)) << ','
        << fmt(quantile(c.vem_scores, 0.75)) << ',' << fmt(quantile(c.svem_scores, 0.25)) << ','
        << fmt(quantile(c.svem_scores, 0.75)) << ',' << fmt(c.max_marginal_error) << ',' << c.sinkhorn_nonconverged
        << '\n';
  return out.str();
}

}  // namespace otclust
