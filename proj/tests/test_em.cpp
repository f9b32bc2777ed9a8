#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "otclust/baselines.hpp"
#include "otclust/em.hpp"
#include "otclust/rng.hpp"

using namespace otclust;

namespace {

Dataset points(std::vector<double> ys) {
  Dataset d;
  d.points.resize(Index(ys.size()), 1);
  for (std::size_t i = 0; i < ys.size(); ++i) d.points(Index(i), 0) = ys[i];
  return d;
}

MixtureParams line(std::vector<double> theta, double s2) {
  Matrix loc(Index(theta.size()), 1);
  for (std::size_t k = 0; k < theta.size(); ++k) loc(Index(k), 0) = theta[k];
  return MixtureParams::isotropic(loc, s2);
}

}  // namespace

TEST_CASE("M-step hand values") {
  Responsibilities r;
  r.matrix = Matrix(2, 2);
  r.matrix << 0.75, 0.25, 0.25, 0.75;
  const auto spec = VarianceSpec::spherical_shared(2, 1, 1.0);
  const MixtureParams p = mstep_gaussian(points({0.0, 4.0}), r, spec, Vector::Constant(2, 0.5));
  CHECK(p.locations(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p.locations(1, 0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(p.variances.values.isApprox(spec.values));
}

TEST_CASE("M-step with one-hot responsibilities gives cluster means") {
  const auto data = points({0.0, 1.0, 5.0, 6.0, 7.0});
  Responsibilities r;
  r.matrix = Matrix::Zero(5, 2);
  r.matrix.col(0).head(2).setOnes();
  r.matrix.col(1).tail(3).setOnes();
  const MixtureParams p =
      mstep_gaussian(data, r, VarianceSpec::spherical(Vector::Ones(2), 1, false), Vector::Constant(2, 0.5));
  CHECK(p.locations(0, 0) == 0.5);
  CHECK(p.locations(1, 0) == 6.0);
  CHECK(p.variances.values(0, 0) == doctest::Approx(0.25));
  CHECK(p.variances.values(1, 0) == doctest::Approx(2.0 / 3.0));

  const MixtureParams shared =
      mstep_gaussian(data, r, VarianceSpec::spherical_shared(2, 1, 1.0, false), Vector::Constant(2, 0.5));
  CHECK(shared.variances.values(0, 0) == doctest::Approx((0.25 * 2 + 2.0) / 5.0));
}

TEST_CASE("M-step rejects an empty component") {
  Responsibilities r;
  r.matrix = Matrix::Zero(3, 2);
  r.matrix.col(0).setOnes();
  CHECK_THROWS_AS(mstep_gaussian(points({0, 1, 2}), r, VarianceSpec::spherical_shared(2, 1, 1.0), Vector::Constant(2, 0.5)),
                  EmptyComponent);
}

TEST_CASE("weighted M-step balance under transport responsibilities") {
  const MixtureParams truth = line({-2.0, 0.5, 3.0}, 0.5);
  const Dataset d = sample_mixture(truth, 300, 21);
  SinkhornConfig c;
  c.tolerance = 1e-9;
  c.max_iterations = 10000;
  const SinkhornSolution s = sinkhorn_estep(line({-1.0, 0.0, 1.0}, 0.5), d, c);
  const MixtureParams next = mstep_gaussian(d, s.responsibilities, truth.variances, truth.weights);
  const double centre = next.weights.dot(next.locations.col(0));
  CHECK(centre == doctest::Approx(d.points.mean()).epsilon(1e-7));
}

TEST_CASE("EM from the truth converges fast and descends") {
  const MixtureParams truth = line({-5.0, 0.0, 5.0}, 0.3);
  const Dataset d = sample_mixture(truth, 600, 4);
  const FitReport r = em_fit(d, truth, FitConfig{});
  CHECK(r.converged);
  CHECK(r.iterations <= 3);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i].ell <= r.loss_trace[i - 1].ell + 1e-10);
}

TEST_CASE("label-swapped start gives a swapped optimum") {
  const MixtureParams truth = line({-3.0, 3.0}, 1.0);
  const Dataset d = sample_mixture(truth, 400, 9);
  const FitReport a = em_fit(d, line({-2.5, 2.5}, 1.0), FitConfig{});
  const FitReport b = em_fit(d, line({2.5, -2.5}, 1.0), FitConfig{});
  CHECK(center_error(a.final_params, b.final_params) < 1e-8);
  CHECK(a.loss_trace.back().ell == doctest::Approx(b.loss_trace.back().ell).epsilon(1e-10));
}

TEST_CASE("single component: SEM and EM coincide") {
  const Dataset d = sample_mixture(line({1.0}, 2.0), 50, 2);
  FitConfig c;
  c.update_variances = true;
  c.record_trajectory = true;
  const FitReport e = em_fit(d, line({-1.0}, 1.0), c);
  const FitReport s = sem_fit(d, line({-1.0}, 1.0), c);
  REQUIRE(e.trajectory.size() == s.trajectory.size());
  for (std::size_t t = 0; t < e.trajectory.size(); ++t) CHECK(l1_change(e.trajectory[t], s.trajectory[t]) < 1e-12);
}

TEST_CASE("SEM descends the entropic loss") {
  const MixtureParams truth = line({-2.0, 0.0, 2.5}, 0.5);
  const Dataset d = sample_mixture(truth, 500, 31);
  FitConfig c;
  c.update_variances = true;
  const FitReport r = sem_fit(d, line({-0.5, 0.0, 0.5}, 1.0), c);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    CHECK(r.loss_trace[i].entropic <= r.loss_trace[i - 1].entropic + 10.0 * c.sinkhorn.tolerance);
  CHECK(r.responsibilities.kind == ResponsibilityKind::Transport);
}

TEST_CASE("exponentiated-gradient weight step") {
  Vector w(2), g(2);
  w << 0.5, 0.5;
  g << std::log(4.0), 0.0;
  const Vector n = update_weights_eg(w, g, 1.0);
  CHECK(n(0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(n(1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(update_weights_eg(w, Vector::Constant(2, 3.0), 1.0).isApprox(w));
  CHECK(update_weights_eg(w, g, 0.0).isApprox(w));
}

TEST_CASE("coordinate descent keeps near-uniform weights near uniform") {
  Matrix loc(4, 2);
  loc << -3, 0, 3, 0, 0, 3, 0, -3;
  const MixtureParams truth = MixtureParams::isotropic(loc, 0.3);
  const Dataset d = sample_mixture(truth, 800, 17);
  FitConfig c;
  c.update_weights = true;
  const FitReport r = sem_fit(d, truth, c);
  CHECK((r.final_params.weights.array() - 0.25).abs().maxCoeff() <= 2.0 / std::sqrt(800.0));
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
    if (!std::isnan(r.loss_trace[i].entropic) && !std::isnan(r.loss_trace[i - 1].entropic))
      CHECK(r.loss_trace[i].entropic <= r.loss_trace[i - 1].entropic + 10.0 * c.sinkhorn.tolerance);
}

TEST_CASE("coordinate descent moves weights toward unequal truth") {
  Matrix loc(2, 1);
  loc << -3.0, 3.0;
  MixtureParams truth = MixtureParams::isotropic(loc, 1.0);
  truth.weights << 0.2, 0.8;
  const Dataset d = sample_mixture(truth, 2000, 8);
  FitConfig c;
  c.update_weights = true;
  const FitReport r = coordinate_descent_fit(d, MixtureParams::isotropic(loc, 1.0), c);
  CHECK(r.final_params.weights(0) == doctest::Approx(0.2).epsilon(0.15));
}

TEST_CASE("fit config validation") {
  FitConfig c;
  c.max_outer_iterations = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = FitConfig{};
  c.weight_step = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
