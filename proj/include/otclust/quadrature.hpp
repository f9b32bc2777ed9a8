#pragma once

#include <algorithm>
#include <vector>

#include "otclust/common.hpp"

namespace otclust {

/// m-point Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  Vector nodes;
  Vector weights;

  explicit GaussLegendre(int points);
};

/// E f(mu + Z), Z ~ N(0, 1), by composite Gauss-Legendre over |z| <= 13 on
/// unit panels. When the integrand has a sharp transition at `kink` whose
/// nearest complex singularity is `width` off the real axis, panels are
/// graded geometrically toward it.
class NormalPanelRule {
 public:
  explicit NormalPanelRule(int points_per_panel) : rule_(points_per_panel) {}

  int points_per_panel() const { return int(rule_.nodes.size()); }

  template <typename F>
  double expectation(double mu, F&& f, double kink = std::numeric_limits<double>::quiet_NaN(),
                     double width = 0.0) const {
    constexpr double half_range = 13.0;
    std::vector<double> cuts;
    cuts.reserve(64);
    for (double z = -half_range; z <= half_range; z += 1.0) cuts.push_back(z);
    const double kz = kink - mu;
    if (std::isfinite(kz) && std::abs(kz) < half_range && width > 0.0) {
      cuts.push_back(kz);
      for (double g = 0.25 * width; g < 2.0 * half_range; g *= 2.0) {
        if (kz - g > -half_range) cuts.push_back(kz - g);
        if (kz + g < half_range) cuts.push_back(kz + g);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    double s = 0.0;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      const double a = cuts[p], b = cuts[p + 1];
      if (b - a <= 0.0) continue;
      const double c = 0.5 * (a + b), h = 0.5 * (b - a);
      double panel = 0.0;
      for (Index i = 0; i < rule_.nodes.size(); ++i) {
        const double z = c + h * rule_.nodes(i);
        panel += rule_.weights(i) * std::exp(-0.5 * z * z) * f(mu + z);
      }
      s += h * panel;
    }
    return s / std::sqrt(2.0 * M_PI);
  }

 private:
  GaussLegendre rule_;
};

}  // namespace otclust
