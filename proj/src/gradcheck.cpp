#include "moralclip/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "moralclip/errors.hpp"
#include "moralclip/rng.hpp"

namespace moralclip {

GradCheckResult finite_difference_check(const LossWithGradient& loss, std::span<const double> params,
                                        const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ValidationError("finite-difference step must be positive");
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> analytic(x.size(), 0.0);
  const double base = loss(x, analytic);
  if (!std::isfinite(base)) throw DegenerateInputError("loss is not finite at the probe point");

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > options.coordinates) {
    Rng rng(options.seed);
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(options.coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  std::span<double> no_grad;
  for (std::size_t c : coords) {
    const double saved = x[c];
    x[c] = saved + options.step;
    const double up = loss(x, no_grad);
    x[c] = saved - options.step;
    const double down = loss(x, no_grad);
    x[c] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DegenerateInputError("loss became non-finite while probing coordinate " + std::to_string(c));
    }
    const double numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic[c]), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic[c] - numeric) / denom;
    if (result.coordinates_checked == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_coordinate = c;
    }
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace moralclip
