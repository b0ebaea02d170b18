#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "moralclip/checkpoint.hpp"
#include "moralclip/dataset.hpp"
#include "moralclip/encoder.hpp"
#include "moralclip/evaluation.hpp"
#include "moralclip/features.hpp"
#include "moralclip/losses.hpp"
#include "moralclip/manifest.hpp"

namespace moralclip {

enum class Schedule { Cosine, Constant };
std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view s);

enum class Variant { Normal, Augmented, SwapMild, SwapStrong };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct TrainConfig {
  double lambda = 0.4;
  double temperature = 0.07;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-5;
  double min_learning_rate = 0.0;
  double weight_decay = 0.01;
  Schedule schedule = Schedule::Cosine;
  bool include_diagonal = false;
  MoralScale moral_scale = MoralScale::Literal;
  std::uint64_t seed = 0;

  std::size_t hidden_dim = 64;
  std::size_t output_dim = 32;
  bool bypass = true;

  // dataset variants
  std::size_t augment_copies = 4;
  double swap_mix_fraction = 0.75;
  std::size_t swap_group_cap = 500;

  MoralLossOptions loss_options() const { return {include_diagonal, moral_scale}; }
};

/// Throws ValidationError when any field is out of range.
void validate(const TrainConfig& cfg);

/// Key/value echo of every field, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& cfg);

struct AlignmentModel {
  ProjectionEncoder image;
  ProjectionEncoder text;

  friend bool operator==(const AlignmentModel&, const AlignmentModel&) = default;
};

/// Seeded initialization of both encoders.
AlignmentModel make_alignment_model(const TrainConfig& cfg, std::size_t image_dim, std::size_t text_dim);

/// Embeds the image feature and active caption of every record.
RetrievalCorpus embed_records(const AlignmentModel& model, const Manifest& records, const FeatureBank& images,
                              const FeatureBank& texts);

struct RetrievalMap {
  /// Indexed by Direction: I2I, T2T, I2T, T2I.
  std::array<double, 4> per_direction{};
  double mean = 0.0;
};

/// Moral MAP in all four directions over one record set used as both queries and
/// corpus (the query itself is excluded for same-modality directions).
RetrievalMap retrieval_map(const RetrievalCorpus& corpus);

/// Records used for per-epoch model selection: SMID-sourced validation records,
/// or all validation records when none are SMID-sourced.
Manifest validation_subset(const Manifest& records);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;     // batch means
  double clip_term = 0.0;
  double moral_term = 0.0;
  double val_map = 0.0;
  double learning_rate = 0.0;  // at the last step of the epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::string to_csv() const;
};

struct TrainResult {
  AlignmentModel final_model;
  /// Parameters after the epoch with the highest validation MAP (earliest on ties).
  AlignmentModel best_model;
  std::size_t best_epoch = 0;
  double best_val_map = 0.0;
  TrainHistory history;
  std::size_t train_samples = 0;
  std::optional<SwapResult> swap;
};

/// Applies the dataset variant to the train split, then runs mini-batch training
/// with decoupled weight decay. Throws ValidationError on missing features or an
/// empty train/validation split.
TrainResult train(const TrainConfig& cfg, const Manifest& records, const FeatureBank& images,
                  const FeatureBank& texts, Variant variant = Variant::Normal);

struct SweepRow {
  double lambda = 0.0;
  std::size_t best_epoch = 0;
  double val_map = 0.0;
};

std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const Manifest& records, const FeatureBank& images,
                                   const FeatureBank& texts, std::span<const double> lambdas,
                                   Variant variant = Variant::Normal);
std::string sweep_to_csv(std::span<const SweepRow> rows);

Checkpoint alignment_checkpoint(const AlignmentModel& model, const TrainConfig& cfg);
AlignmentModel alignment_from_checkpoint(const Checkpoint& ckpt);

}  // namespace moralclip
