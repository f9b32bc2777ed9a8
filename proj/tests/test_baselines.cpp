#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "otclust/assignment.hpp"
#include "otclust/baselines.hpp"
#include "otclust/rng.hpp"

using namespace otclust;

namespace {

Dataset points(std::vector<double> ys) {
  Dataset d;
  d.points.resize(Index(ys.size()), 1);
  for (std::size_t i = 0; i < ys.size(); ++i) d.points(Index(i), 0) = ys[i];
  return d;
}

MixtureParams line(std::vector<double> theta, double s2 = 1.0) {
  Matrix loc(Index(theta.size()), 1);
  for (std::size_t k = 0; k < theta.size(); ++k) loc(Index(k), 0) = theta[k];
  return MixtureParams::isotropic(loc, s2);
}

}  // namespace

TEST_CASE("hungarian matches enumeration") {
  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 50; ++t) {
    const Index n = 1 + t % 6;
    Matrix c(n, n);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do best = std::min(best, assignment_cost(c, perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(assignment_cost(c, hungarian(c)) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("hungarian on rectangular costs") {
  Matrix c(2, 3);
  c << 5, 1, 9, 1, 6, 9;
  const auto a = hungarian(c);
  CHECK(a == std::vector<Index>{1, 0});
}

TEST_CASE("kmeans++ seeding") {
  const auto d = points({0.0, 1.0, 2.0, 3.0, 4.0});
  MixtureParams all = kmeanspp_init(d, 5, 1);
  std::vector<double> got(all.locations.data(), all.locations.data() + 5);
  std::sort(got.begin(), got.end());
  CHECK(got == std::vector<double>{0, 1, 2, 3, 4});

  const auto a = kmeanspp_init(d, 1, 42), b = kmeanspp_init(d, 1, 42);
  CHECK(a.locations == b.locations);
  CHECK(a.weights(0) == 1.0);

  std::vector<double> bimodal;
  for (int i = 0; i < 50; ++i) bimodal.push_back(0.01 * i);
  for (int i = 0; i < 50; ++i) bimodal.push_back(1000.0 + 0.01 * i);
  const auto far = points(bimodal);
  int opposite = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto p = kmeanspp_init(far, 2, s);
    opposite += (p.locations(0, 0) < 500.0) != (p.locations(1, 0) < 500.0);
  }
  CHECK(opposite >= 990);
}

TEST_CASE("lloyd hand iteration") {
  const auto d = points({0.0, 1.0, 9.0, 10.0});
  const KMeansResult r = lloyd_kmeans(d, line({0.0, 10.0}), 100);
  CHECK(r.params.locations(0, 0) == 0.5);
  CHECK(r.params.locations(1, 0) == 9.5);
  CHECK(r.inertia == doctest::Approx(1.0));
  CHECK(r.converged);

  const KMeansResult flipped = lloyd_kmeans(d, line({10.0, 0.0}), 100);
  CHECK(center_error(flipped.params, r.params) == 0.0);

  const KMeansResult exact = lloyd_kmeans(points({1.0, 5.0}), line({1.0, 5.0}), 100);
  CHECK(exact.inertia == 0.0);
  CHECK(exact.converged);
  CHECK(exact.iterations <= 2);
  for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1]);
}

TEST_CASE("center error") {
  CHECK(center_error(line({0.0, 3.0}), line({1.0, 2.0})) == 1.0);
  CHECK(center_error(line({3.0, 1.0, 2.0}), line({1.0, 2.0, 3.0})) == 0.0);
  Matrix a(1, 2), b(1, 2);
  a << 0, 0;
  b << 1, 0;
  CHECK(center_error(MixtureParams::isotropic(a, 1), MixtureParams::isotropic(b, 1)) == 1.0);
}

TEST_CASE("adjusted rand index") {
  CHECK(adjusted_rand_index({0, 1, 1, 2}, {0, 1, 1, 2}) == 1.0);
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(adjusted_rand_index({0, 1, 2, 3}, {0, 0, 0, 0}) == 0.0);
  CHECK(adjusted_rand_index({0, 0, 1, 1, 2, 2}, {0, 0, 1, 2, 2, 2}) == doctest::Approx(0.444444444444).epsilon(1e-9));
  CHECK_THROWS_AS(adjusted_rand_index({0}, {0, 1}), InvalidArgument);
}

TEST_CASE("bic parameter counts") {
  Matrix loc = Matrix::Zero(3, 2);
  const Dataset d = sample_mixture(MixtureParams::isotropic(loc, 1.0), 100, 1);
  const double base = 2.0 * 100.0 * neg_loglik(MixtureParams::isotropic(loc, 1.0), d);
  CHECK(bic_score(MixtureParams::isotropic(loc, 1.0), d) == doctest::Approx(base + 6.0 * std::log(100.0)));
  CHECK(bic_score(MixtureParams::isotropic(loc, 1.0, false), d) == doctest::Approx(base + 7.0 * std::log(100.0)));
  CHECK(bic_score(MixtureParams::isotropic(loc, 1.0), d, true) == doctest::Approx(base + 8.0 * std::log(100.0)));
}

TEST_CASE("select_k on well-separated data") {
  Matrix loc(3, 2);
  loc << 0, 0, 3, 0, 0, 3;
  const MixtureParams truth = MixtureParams::isotropic(loc, 0.01);
  FitProcedure em = [](const Dataset& d, Index k, std::uint64_t seed) {
    return em_fit(d, kmeanspp_init(d, k, seed, 0.01), FitConfig{});
  };
  int hits = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const Dataset d = sample_mixture(truth, 300, derive_seed(77, {rep}));
    hits += select_k(d, {1, 2, 3, 4, 5, 6}, em, 3, rep).k_hat == 3;
  }
  CHECK(hits >= 18);

  const Dataset d = sample_mixture(truth, 100, 1);
  const SelectionResult one = select_k(d, {4}, em, 2, 5);
  CHECK(one.k_hat == 4);
  CHECK(one.table.size() == 1);
}

TEST_CASE("many-fit-one exclusion by hand") {
  const MixtureParams truth = line({0.0, 10.0});
  const MixtureParams cand = line({0.0, 0.1, 10.0});
  const ManyFitOneDiagnostic g = many_fit_one_excluded(truth, cand, 1, {0, 1}, 0.4);
  CHECK(g.delta == doctest::Approx(10.0));
  CHECK(g.threshold == doctest::Approx(3.0 / (std::sqrt(2.0 * M_PI) * 0.2)).epsilon(1e-12));
  CHECK(g.covering_radius == doctest::Approx(0.1));
  CHECK(g.covering_exact);
  CHECK(g.excluded);
}

TEST_CASE("many-fit-one: truth itself is not excluded") {
  const MixtureParams truth = line({0.0, 1.0, 2.0});
  const ManyFitOneDiagnostic g = many_fit_one_excluded(truth, truth, 1, {0, 1, 2}, 0.1);
  CHECK_FALSE(g.excluded);
}

namespace {

// Truth (0, D), (0, -D), (R, 0) and a candidate with one centre at the origin
// and two at (R, 0), projected on the line from (0, -D) through (R, 0) and
// negated so that (R, 0) comes first.
ManyFitOneDiagnostic spurious_projection(double D, double R) {
  Matrix t(3, 2), c(3, 2);
  t << 0, D, 0, -D, R, 0;
  c << 0, 0, R, 0.2, R, -0.2;
  Vector origin(2), dir(2);
  origin << 0.0, -D;
  dir << R, D;
  const MixtureParams truth = project_to_line(MixtureParams::isotropic(t, 1.0), origin, dir, true);
  const MixtureParams cand = project_to_line(MixtureParams::isotropic(c, 1.0), origin, dir, true);
  return many_fit_one_excluded(truth, cand, 1, {1, 2}, 0.45);
}

}  // namespace

TEST_CASE("many-fit-one on the projected spurious configuration") {
  const ManyFitOneDiagnostic big = spurious_projection(5.0, 15.0);
  const double h = std::sqrt(250.0);
  CHECK(big.delta == doctest::Approx(h - 50.0 / h).epsilon(1e-12));
  CHECK(big.threshold == doctest::Approx(3.0 / (std::sqrt(2.0 * M_PI) * 0.1)).epsilon(1e-12));
  CHECK(big.excluded);

  // At D = 3, R = 9 the gap is about 7.59, below the 11.97 threshold.
  const ManyFitOneDiagnostic small = spurious_projection(3.0, 9.0);
  CHECK(small.delta == doctest::Approx(7.5895).epsilon(1e-4));
  CHECK_FALSE(small.excluded);
}

TEST_CASE("balance residual") {
  const Dataset d = points({-1.0, 0.0, 2.0});
  CHECK(balance_residual(d, Matrix::Ones(3, 1), Vector::Ones(1)) == doctest::Approx(0.0).epsilon(1e-15));
  Matrix psi(3, 2);
  psi << 1, 0, 1, 0, 0, 1;
  Vector w(2);
  w << 0.5, 0.5;
  CHECK(balance_residual(d, psi, w) == doctest::Approx(std::abs(0.5 * -0.5 + 0.5 * 2.0 - 1.0 / 3.0)));
}
