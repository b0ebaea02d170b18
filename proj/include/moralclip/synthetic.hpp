#pragma once

#include <cstdint>
#include <map>

#include "moralclip/features.hpp"
#include "moralclip/manifest.hpp"

namespace moralclip {

// Desk-scale stand-in for extracted image/text features. Every sample carries
//   moral_signal_strength * dir(class)            shared by image and captions
//   + label_signal_strength * sum dir(f, p)       over its active entries
//   + semantic content ~ N(0, semantic_strength^2) shared by image and captions
//   + independent N(0, noise_scale^2) noise per modality vector.
struct SyntheticCorpusConfig {
  std::size_t n_samples = 2000;
  std::size_t feature_dim = 64;
  double moral_signal_strength = 5.0;
  std::map<PolarityClass, double> label_distribution = {
      {PolarityClass::Neutral, 0.2}, {PolarityClass::Virtue, 0.35}, {PolarityClass::Vice, 0.35}, {PolarityClass::Mixed, 0.1}};
  double noise_scale = 1.0;
  double semantic_strength = 1.0;
  double label_signal_strength = 0.0;
  /// Probability that a foundation is active within a Virtue/Vice/Mixed sample.
  double foundation_rate = 0.5;
  std::size_t captions_per_sample = 5;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  Manifest records;
  FeatureBank images;
  FeatureBank texts;  // keyed by caption string
};

/// Throws ValidationError when the label distribution is negative or does not sum to 1 (±1e-9).
void validate(const SyntheticCorpusConfig& cfg);

SyntheticCorpus synthesize_corpus(const SyntheticCorpusConfig& cfg);

}  // namespace moralclip
