#include "moralclip/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "moralclip/errors.hpp"

namespace moralclip {

AdamOptimizer::AdamOptimizer(std::size_t n, const AdamOptions& options) : opt_(options), m_(n, 0.0), v_(n, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grad, double learning_rate) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ValidationError("optimizer size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - learning_rate * opt_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * grad[i];
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] = params[i] * decay - learning_rate * m_hat / (std::sqrt(v_hat) + opt_.epsilon);
  }
}

double cosine_annealed_lr(double base_lr, double min_lr, long step, long total_steps) {
  if (total_steps <= 0) return base_lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace moralclip
