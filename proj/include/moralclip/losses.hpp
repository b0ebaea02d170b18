#pragma once

#include <span>

#include "moralclip/labels.hpp"
#include "moralclip/matrix.hpp"

namespace moralclip {

/// A scalar loss with gradients w.r.t. the raw (unnormalized) image and text embeddings.
struct LossValue {
  double value = 0.0;
  Matrix grad_image;
  Matrix grad_text;
};

/// Symmetric cross-entropy over logits cos(img_i, txt_j) / temperature, averaged
/// over the image-to-text and text-to-image directions.
LossValue clip_contrastive_loss(const Matrix& image, const Matrix& text, double temperature);

enum class MoralScale {
  /// Compare cos/temperature against the moral similarity, as the objective is written.
  Literal,
  /// Compare the plain cosine against the moral similarity (both in [-1, 1]).
  MatchScale,
};

struct MoralLossOptions {
  bool include_diagonal = false;
  MoralScale scale = MoralScale::Literal;
};

/// Mean over counted pairs (i, j) of (sim(img_i, txt_j) - moral_similarity(image_labels[i], text_labels[j]))^2.
/// Pairs are all i != j, plus i == j when include_diagonal is set.
LossValue moral_loss(const Matrix& image, const Matrix& text, std::span<const MoralLabelVector> image_labels,
                     std::span<const MoralLabelVector> text_labels, double temperature,
                     const MoralLossOptions& options = {});

struct LossReport {
  double total = 0.0;
  double clip_term = 0.0;
  double moral_term = 0.0;
  Matrix grad_image;
  Matrix grad_text;
};

/// (1 - lambda) * contrastive + lambda * moral, with the matching gradient combination.
LossReport total_loss(const Matrix& image, const Matrix& text, std::span<const MoralLabelVector> image_labels,
                      std::span<const MoralLabelVector> text_labels, double lambda, double temperature,
                      const MoralLossOptions& options = {});

}  // namespace moralclip
