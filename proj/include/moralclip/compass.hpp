#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moralclip/checkpoint.hpp"
#include "moralclip/features.hpp"
#include "moralclip/labels.hpp"
#include "moralclip/manifest.hpp"
#include "moralclip/matrix.hpp"
#include "moralclip/parameters.hpp"
#include "moralclip/rng.hpp"

namespace moralclip {

inline constexpr std::size_t kPolarityCount = 3;

/// Per-foundation class probabilities, indexed by Polarity (Neither, Virtue, Vice).
using HeadProbabilities = std::array<std::array<double, kPolarityCount>, kFoundationCount>;

/// Shared affine trunk followed by five affine heads of three logits each.
class CompassModel {
 public:
  /// All parameters zero.
  CompassModel(std::size_t input_dim, std::size_t trunk_dim);
  static CompassModel initialized(std::size_t input_dim, std::size_t trunk_dim, Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t trunk_dim() const { return trunk_dim_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// Logits per sample, foundation and class. Throws ValidationError on a dimension mismatch.
  std::vector<HeadProbabilities> logits(const Matrix& x) const;

  friend bool operator==(const CompassModel&, const CompassModel&) = default;

 private:
  std::size_t input_dim_;
  std::size_t trunk_dim_;
  ParameterSet params_;  // trunk.w, trunk.b, then <foundation>.w, <foundation>.b
};

/// Normalized exponential of each head's logits.
std::vector<HeadProbabilities> compass_forward(const CompassModel& model, const Matrix& x);
std::vector<HeadProbabilities> compass_forward(const CompassModel& model, const FeatureBank& features);

/// Sum over foundations of the mean cross-entropy of that head. Throws
/// ValidationError when a triple is off 1 by more than 1e-6 or the lengths differ.
double compass_loss(std::span<const HeadProbabilities> probabilities, std::span<const MoralLabelVector> labels);

struct CompassLossGradient {
  double loss = 0.0;
  std::vector<double> grad;  // layout of model.parameters()
};

CompassLossGradient compass_loss_and_gradient(const CompassModel& model, const Matrix& x,
                                              std::span<const MoralLabelVector> labels);

/// Argmax per foundation; ties go to Neither, then Vice, then Virtue.
Polarity argmax_polarity(const std::array<double, kPolarityCount>& p);
MoralLabelVector predict_label(const HeadProbabilities& p);
std::vector<MoralLabelVector> predict_labels(const CompassModel& model, const Matrix& x);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // macro over the three classes, 0/0 counted as 0
  double recall = 0.0;
  double f1 = 0.0;         // mean of per-class F1
};

struct CompassMetrics {
  std::array<ClassificationMetrics, kFoundationCount> per_foundation{};
  ClassificationMetrics average;
  std::size_t samples = 0;
  std::string to_csv() const;
};

/// Throws ValidationError on empty input or length mismatch.
CompassMetrics classification_metrics(std::span<const MoralLabelVector> truth,
                                      std::span<const MoralLabelVector> predicted);

/// Predicts from the records' image features and scores against their labels.
CompassMetrics evaluate_compass(const CompassModel& model, const Manifest& records, const FeatureBank& images);

struct CompassConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 3;
  std::size_t early_stop_patience = 8;
  std::size_t early_stop_warmup = 10;
  std::size_t trunk_dim = 64;
  std::uint64_t seed = 0;
};

void validate(const CompassConfig& cfg);

/// Multiplies the learning rate by `factor` once the metric has failed to
/// improve on its best value for more than `patience` consecutive epochs,
/// then starts counting afresh.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, std::size_t patience) : factor_(factor), patience_(patience) {}
  /// Returns true when this observation triggers a reduction.
  bool observe(double metric, double& learning_rate);

 private:
  double factor_;
  std::size_t patience_;
  bool has_best_ = false;
  double best_ = 0.0;
  std::size_t bad_epochs_ = 0;
};

/// Stops once `patience` consecutive epochs after epoch `warmup` fail to
/// improve on the best metric seen so far (warmup epochs included in the best).
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, std::size_t warmup) : patience_(patience), warmup_(warmup) {}
  /// `epoch` is 1-based. Returns true when training should stop after this epoch.
  bool observe(std::size_t epoch, double metric);

 private:
  std::size_t patience_;
  std::size_t warmup_;
  bool has_best_ = false;
  double best_ = 0.0;
  std::size_t bad_epochs_ = 0;
};

struct CompassEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double learning_rate = 0.0;  // used during this epoch
  bool lr_reduced = false;     // after this epoch
  bool stopped = false;
};

/// Drives the plateau and early-stop logic over a given validation-F1 sequence,
/// exactly as training does. Entries after a stop are not produced.
std::vector<CompassEpoch> schedule_for(const CompassConfig& cfg, std::span<const double> val_f1);

struct CompassTrainResult {
  CompassModel model;  // parameters of the best validation epoch
  std::size_t best_epoch = 0;
  std::vector<CompassEpoch> log;
  std::string log_csv() const;
};

/// Trains on the records' image features. Throws ValidationError on an empty
/// train or validation set or missing features.
CompassTrainResult train_compass(const CompassConfig& cfg, const Manifest& train, const Manifest& val,
                                 const FeatureBank& images);

/// Replaces each record's label with the prediction and marks its provenance Compass.
Manifest compass_label(const CompassModel& model, const Manifest& records, const FeatureBank& images);

Checkpoint compass_checkpoint(const CompassModel& model, const CompassConfig& cfg);
CompassModel compass_from_checkpoint(const Checkpoint& ckpt);

}  // namespace moralclip
