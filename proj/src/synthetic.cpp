#include "moralclip/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "moralclip/rng.hpp"

namespace moralclip {

namespace {

constexpr std::array<PolarityClass, 4> kClassOrder = {PolarityClass::Neutral, PolarityClass::Virtue,
                                                      PolarityClass::Vice, PolarityClass::Mixed};

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (double& x : v) x = rng.normal();
    n = l2_norm(v);
  }
  for (double& x : v) x /= n;
  return v;
}

PolarityClass draw_class(Rng& rng, const std::map<PolarityClass, double>& dist) {
  const double u = rng.uniform();
  double acc = 0.0;
  PolarityClass last = PolarityClass::Neutral;
  for (PolarityClass c : kClassOrder) {
    auto it = dist.find(c);
    if (it == dist.end() || it->second <= 0.0) continue;
    acc += it->second;
    last = c;
    if (u < acc) return c;
  }
  return last;
}

MoralLabelVector draw_label(Rng& rng, PolarityClass cls, double rate) {
  MoralLabelVector label;
  if (cls == PolarityClass::Neutral) return label;
  for (;;) {
    for (Foundation f : kAllFoundations) {
      const double u = rng.uniform();
      Polarity p = Polarity::Neither;
      switch (cls) {
        case PolarityClass::Virtue: p = u < rate ? Polarity::Virtue : Polarity::Neither; break;
        case PolarityClass::Vice: p = u < rate ? Polarity::Vice : Polarity::Neither; break;
        case PolarityClass::Mixed:
          p = u < rate / 2 ? Polarity::Virtue : (u < rate ? Polarity::Vice : Polarity::Neither);
          break;
        case PolarityClass::Neutral: break;
      }
      label.set(f, p);
    }
    if (collapse_polarity(label) == cls) return label;
  }
}

std::size_t pair_index(Foundation f, Polarity p) {
  return static_cast<std::size_t>(f) * 2 + (p == Polarity::Vice ? 1 : 0);
}

}  // namespace

void validate(const SyntheticCorpusConfig& cfg) {
  if (cfg.feature_dim == 0) throw ValidationError("feature_dim must be positive");
  if (cfg.captions_per_sample == 0) throw ValidationError("captions_per_sample must be positive");
  if (!(cfg.noise_scale > 0.0)) throw ValidationError("noise_scale must be positive");
  if (cfg.moral_signal_strength < 0.0 || cfg.semantic_strength < 0.0 || cfg.label_signal_strength < 0.0) {
    throw ValidationError("signal strengths must be non-negative");
  }
  if (!(cfg.foundation_rate > 0.0 && cfg.foundation_rate <= 1.0)) {
    throw ValidationError("foundation_rate must lie in (0, 1]");
  }
  double sum = 0.0;
  for (const auto& [cls, p] : cfg.label_distribution) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("invalid label distribution: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("invalid label distribution: probabilities sum to " + std::to_string(sum));
  }
}

SyntheticCorpus synthesize_corpus(const SyntheticCorpusConfig& cfg) {
  validate(cfg);
  const std::size_t dim = cfg.feature_dim;
  Rng rng(cfg.seed);

  std::array<std::vector<double>, 4> class_dirs;
  for (auto& d : class_dirs) d = random_unit(rng, dim);
  std::array<std::vector<double>, 10> pair_dirs;
  for (auto& d : pair_dirs) d = random_unit(rng, dim);

  SyntheticCorpus corpus{{}, FeatureBank(dim), FeatureBank(dim)};
  corpus.records.reserve(cfg.n_samples);

  std::vector<double> moral(dim), semantic(dim), vec(dim);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const PolarityClass cls = draw_class(rng, cfg.label_distribution);
    const MoralLabelVector label = draw_label(rng, cls, cfg.foundation_rate);

    const auto& cdir = class_dirs[static_cast<std::size_t>(cls)];
    for (std::size_t k = 0; k < dim; ++k) moral[k] = cfg.moral_signal_strength * cdir[k];
    for (const auto& e : active_set(label)) {
      const auto& pdir = pair_dirs[pair_index(e.foundation, e.polarity)];
      for (std::size_t k = 0; k < dim; ++k) moral[k] += cfg.label_signal_strength * pdir[k];
    }
    for (double& x : semantic) x = cfg.semantic_strength * rng.normal();

    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "syn-%06zu", i);
    SampleRecord rec;
    rec.id = id_buf;
    rec.source = Source::Synthetic;
    rec.image_feature_id = rec.id;
    rec.label = label;
    rec.provenance = Provenance::Synthetic;

    for (std::size_t k = 0; k < dim; ++k) vec[k] = moral[k] + semantic[k] + cfg.noise_scale * rng.normal();
    corpus.images.add(rec.image_feature_id, std::span<const double>(vec));

    for (std::size_t c = 0; c < cfg.captions_per_sample; ++c) {
      std::string caption = rec.id + " caption " + std::to_string(c);
      for (std::size_t k = 0; k < dim; ++k) vec[k] = moral[k] + semantic[k] + cfg.noise_scale * rng.normal();
      corpus.texts.add(caption, std::span<const double>(vec));
      rec.captions.push_back(std::move(caption));
    }
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace moralclip
