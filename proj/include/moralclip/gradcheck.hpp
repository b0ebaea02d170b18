#pragma once

#include <cstdint>
#include <functional>
#include <span>

namespace moralclip {

/// Evaluates a loss at `params`. When `grad` is non-empty it must be filled
/// with the analytic gradient (same length as params).
using LossWithGradient = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates probed; all of them when the parameter vector is smaller.
  std::size_t coordinates = 100;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates_checked = 0;
};

/// Compares analytic gradients with central differences. Relative error per
/// coordinate uses the denominator max(|analytic|, |numeric|, 1e-8).
/// Throws DegenerateInputError if the loss becomes non-finite while probing.
GradCheckResult finite_difference_check(const LossWithGradient& loss, std::span<const double> params,
                                        const GradCheckOptions& options = {});

}  // namespace moralclip
