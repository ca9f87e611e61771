#pragma once

#include "fedner/tape.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace fedner {

/// Central-difference check of an analytic gradient.
///
/// `f` evaluates the scalar objective at the given leaf values; it is called
/// repeatedly with perturbed copies. Returns the max over elements of
/// |analytic - central difference| / max(1, |analytic|).
inline double finite_difference_check(
    const std::function<double(const std::vector<Matrix>&)>& f,
    std::vector<Matrix> at, const std::vector<Matrix>& analytic, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h <= 0");
  double worst = 0.0;
  for (size_t l = 0; l < at.size(); ++l) {
    for (Eigen::Index i = 0; i < at[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < at[l].cols(); ++j) {
        const double orig = at[l](i, j);
        at[l](i, j) = orig + h;
        const double fp = f(at);
        at[l](i, j) = orig - h;
        const double fm = f(at);
        at[l](i, j) = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic[l](i, j);
        const double err = std::abs(an - fd) / std::max(1.0, std::abs(an));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace fedner
