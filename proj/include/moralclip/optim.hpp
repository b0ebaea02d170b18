#pragma once

#include <span>
#include <vector>

namespace moralclip {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled weight decay: params *= (1 - lr * weight_decay) before the moment update.
  double weight_decay = 0.0;
};

/// Adaptive moment estimation with optional decoupled weight decay (AdamW when weight_decay > 0).
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, const AdamOptions& options);

  void step(std::span<double> params, std::span<const double> grad, double learning_rate);
  long steps() const { return t_; }

 private:
  AdamOptions opt_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

/// Cosine annealing from base_lr at step 0 to min_lr at step total_steps.
double cosine_annealed_lr(double base_lr, double min_lr, long step, long total_steps);

}  // namespace moralclip
