#include "moralclip/training.hpp"

#include <cmath>
#include <limits>

#include "moralclip/errors.hpp"
#include "moralclip/optim.hpp"
#include "moralclip/rng.hpp"
#include "moralclip/text.hpp"

namespace moralclip {

std::string_view to_string(Schedule s) { return s == Schedule::Cosine ? "cosine" : "constant"; }

Schedule parse_schedule(std::string_view s) {
  if (s == "cosine") return Schedule::Cosine;
  if (s == "constant") return Schedule::Constant;
  throw ValidationError("unknown schedule '" + std::string(s) + "' (expected cosine or constant)");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Normal: return "normal";
    case Variant::Augmented: return "augmented";
    case Variant::SwapMild: return "swap_mild";
    case Variant::SwapStrong: return "swap_strong";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::Normal, Variant::Augmented, Variant::SwapMild, Variant::SwapStrong}) {
    if (s == to_string(v)) return v;
  }
  throw ValidationError("unknown variant '" + std::string(s) +
                        "' (expected normal, augmented, swap_mild or swap_strong)");
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) throw ValidationError("temperature must be positive");
  if (cfg.epochs < 1) throw ValidationError("epochs must be at least 1");
  if (cfg.batch_size < 2) throw ValidationError("batch_size must be at least 2");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(cfg.min_learning_rate >= 0.0 && cfg.min_learning_rate <= cfg.learning_rate)) {
    throw ValidationError("min_learning_rate must lie in [0, learning_rate]");
  }
  if (!(cfg.weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (cfg.hidden_dim < 1 || cfg.output_dim < 1) throw ValidationError("encoder dimensions must be positive");
  if (cfg.augment_copies < 1) throw ValidationError("augment_copies must be at least 1");
  if (!(cfg.swap_mix_fraction >= 0.0 && cfg.swap_mix_fraction <= 1.0)) {
    throw ValidationError("swap_mix_fraction must lie in [0, 1]");
  }
}

std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& cfg) {
  return {
      {"lambda", format_real(cfg.lambda)},
      {"temperature", format_real(cfg.temperature)},
      {"epochs", std::to_string(cfg.epochs)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"learning_rate", format_real(cfg.learning_rate)},
      {"min_learning_rate", format_real(cfg.min_learning_rate)},
      {"weight_decay", format_real(cfg.weight_decay)},
      {"schedule", std::string(to_string(cfg.schedule))},
      {"include_diagonal", cfg.include_diagonal ? "true" : "false"},
      {"moral_scale", cfg.moral_scale == MoralScale::Literal ? "literal" : "match"},
      {"seed", std::to_string(cfg.seed)},
      {"hidden_dim", std::to_string(cfg.hidden_dim)},
      {"output_dim", std::to_string(cfg.output_dim)},
      {"bypass", cfg.bypass ? "true" : "false"},
      {"augment_copies", std::to_string(cfg.augment_copies)},
      {"swap_mix_fraction", format_real(cfg.swap_mix_fraction)},
      {"swap_group_cap", std::to_string(cfg.swap_group_cap)},
  };
}

AlignmentModel make_alignment_model(const TrainConfig& cfg, std::size_t image_dim, std::size_t text_dim) {
  Rng rng(cfg.seed);
  Rng image_rng = rng.fork(1);
  Rng text_rng = rng.fork(2);
  return {ProjectionEncoder::initialized({image_dim, cfg.hidden_dim, cfg.output_dim, cfg.bypass}, image_rng),
          ProjectionEncoder::initialized({text_dim, cfg.hidden_dim, cfg.output_dim, cfg.bypass}, text_rng)};
}

namespace {

struct FeatureRows {
  std::vector<std::size_t> image;
  std::vector<std::size_t> text;
};

FeatureRows resolve_rows(const Manifest& records, const FeatureBank& images, const FeatureBank& texts) {
  FeatureRows rows;
  rows.image.reserve(records.size());
  rows.text.reserve(records.size());
  for (const auto& r : records) {
    auto img = images.find(r.image_feature_id);
    if (!img) throw ValidationError("image feature '" + r.image_feature_id + "' for record '" + r.id + "' is missing");
    auto txt = texts.find(r.caption());
    if (!txt) throw ValidationError("text feature '" + r.caption() + "' for record '" + r.id + "' is missing");
    rows.image.push_back(*img);
    rows.text.push_back(*txt);
  }
  return rows;
}

LabeledEmbeddings labeled(const Manifest& records, Matrix vectors) {
  LabeledEmbeddings out;
  out.vectors = std::move(vectors);
  for (const auto& r : records) {
    out.ids.push_back(r.id);
    out.labels.push_back(r.label);
  }
  return out;
}

}  // namespace

RetrievalCorpus embed_records(const AlignmentModel& model, const Manifest& records, const FeatureBank& images,
                              const FeatureBank& texts) {
  const FeatureRows rows = resolve_rows(records, images, texts);
  return {labeled(records, model.image.forward(images.gather(rows.image))),
          labeled(records, model.text.forward(texts.gather(rows.text)))};
}

RetrievalMap retrieval_map(const RetrievalCorpus& corpus) {
  RetrievalMap out;
  out.per_direction[0] = mean_average_precision(corpus.images, corpus.images, true).value;
  out.per_direction[1] = mean_average_precision(corpus.texts, corpus.texts, true).value;
  out.per_direction[2] = mean_average_precision(corpus.images, corpus.texts, false).value;
  out.per_direction[3] = mean_average_precision(corpus.texts, corpus.images, false).value;
  out.mean = (out.per_direction[0] + out.per_direction[1] + out.per_direction[2] + out.per_direction[3]) / 4.0;
  return out;
}

Manifest validation_subset(const Manifest& records) {
  Manifest smid = select_split(records, Split::Val);
  Manifest all = smid;
  std::erase_if(smid, [](const SampleRecord& r) { return r.source != Source::Smid; });
  return smid.empty() ? all : smid;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,total,clip_term,moral_term,val_map,learning_rate\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_real(e.total) + "," + format_real(e.clip_term) + "," +
           format_real(e.moral_term) + "," + format_real(e.val_map) + "," + format_real(e.learning_rate) + "\n";
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const Manifest& records, const FeatureBank& images,
                  const FeatureBank& texts, Variant variant) {
  validate(cfg);
  Rng root(cfg.seed);
  const std::uint64_t variant_seed = root.fork(3).next();
  Rng batch_rng = root.fork(4);

  std::optional<SwapResult> swap;
  Manifest prepared;
  switch (variant) {
    case Variant::Normal: prepared = records; break;
    case Variant::Augmented: prepared = augment_replicate(records, cfg.augment_copies, variant_seed); break;
    case Variant::SwapMild:
    case Variant::SwapStrong: {
      SwapConfig sc = variant == Variant::SwapMild ? SwapConfig::mild(variant_seed) : SwapConfig::strong(variant_seed);
      sc.mix_fraction = cfg.swap_mix_fraction;
      if (variant == Variant::SwapMild) sc.per_group_cap = cfg.swap_group_cap;
      swap = mft_swap(records, sc);
      prepared = swap->records;
      break;
    }
  }

  const Manifest train_set = select_split(prepared, Split::Train);
  if (train_set.size() < 2) throw ValidationError("train split needs at least 2 records");
  const Manifest val_set = validation_subset(prepared);
  if (val_set.empty()) throw ValidationError("validation split is empty");

  const FeatureRows rows = resolve_rows(train_set, images, texts);
  resolve_rows(val_set, images, texts);

  AlignmentModel model = make_alignment_model(cfg, images.dim(), texts.dim());
  AdamOptimizer image_opt(model.image.parameters().size(), {0.9, 0.999, 1e-8, cfg.weight_decay});
  AdamOptimizer text_opt(model.text.parameters().size(), {0.9, 0.999, 1e-8, cfg.weight_decay});

  const std::size_t n = train_set.size();
  std::size_t batches_per_epoch = n / cfg.batch_size;
  if (n % cfg.batch_size >= 2) ++batches_per_epoch;
  const long total_steps = static_cast<long>(batches_per_epoch * cfg.epochs);

  std::vector<std::size_t> order(n);
  std::vector<double> image_grad(model.image.parameters().size());
  std::vector<double> text_grad(model.text.parameters().size());
  const MoralLossOptions loss_opts = cfg.loss_options();
  long step = 0;
  TrainHistory history;
  std::optional<AlignmentModel> best_model;
  std::size_t best_epoch = 0;
  double best_val_map = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    batch_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<std::size_t> img_rows, txt_rows;
      std::vector<MoralLabelVector> labels;
      for (std::size_t k = start; k < end; ++k) {
        img_rows.push_back(rows.image[order[k]]);
        txt_rows.push_back(rows.text[order[k]]);
        labels.push_back(train_set[order[k]].label);
      }
      ProjectionEncoder::Cache image_cache, text_cache;
      const Matrix e_img = model.image.forward(images.gather(img_rows), image_cache);
      const Matrix e_txt = model.text.forward(texts.gather(txt_rows), text_cache);
      const LossReport loss = total_loss(e_img, e_txt, labels, labels, cfg.lambda, cfg.temperature, loss_opts);
      if (!std::isfinite(loss.total)) throw Error("loss became non-finite at epoch " + std::to_string(epoch));

      std::fill(image_grad.begin(), image_grad.end(), 0.0);
      std::fill(text_grad.begin(), text_grad.end(), 0.0);
      model.image.backward(image_cache, loss.grad_image, image_grad);
      model.text.backward(text_cache, loss.grad_text, text_grad);

      const double lr = cfg.schedule == Schedule::Cosine
                            ? cosine_annealed_lr(cfg.learning_rate, cfg.min_learning_rate, step, total_steps)
                            : cfg.learning_rate;
      image_opt.step(model.image.parameters().flat(), image_grad, lr);
      text_opt.step(model.text.parameters().flat(), text_grad, lr);
      ++step;

      rec.total += loss.total;
      rec.clip_term += loss.clip_term;
      rec.moral_term += loss.moral_term;
      rec.learning_rate = lr;
      ++batches;
    }
    rec.total /= static_cast<double>(batches);
    rec.clip_term /= static_cast<double>(batches);
    rec.moral_term /= static_cast<double>(batches);
    rec.val_map = retrieval_map(embed_records(model, val_set, images, texts)).mean;
    history.epochs.push_back(rec);

    if (rec.val_map > best_val_map) {
      best_val_map = rec.val_map;
      best_epoch = epoch;
      best_model = model;
    }
  }
  return TrainResult{std::move(model), std::move(*best_model), best_epoch, best_val_map,
                     std::move(history), train_set.size(), std::move(swap)};
}

std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const Manifest& records, const FeatureBank& images,
                                   const FeatureBank& texts, std::span<const double> lambdas, Variant variant) {
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("sweep lambda " + format_real(l) + " is outside [0, 1]");
  }
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    TrainConfig cfg = base;
    cfg.lambda = l;
    const TrainResult r = train(cfg, records, images, texts, variant);
    rows.push_back({l, r.best_epoch, r.best_val_map});
  }
  return rows;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::string out = "lambda,best_epoch,val_map\n";
  for (const auto& r : rows) out += format_real(r.lambda) + "," + std::to_string(r.best_epoch) + "," + format_real(r.val_map) + "\n";
  return out;
}

Checkpoint alignment_checkpoint(const AlignmentModel& model, const TrainConfig& cfg) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::Alignment;
  ckpt.config = config_echo(cfg);
  ckpt.config.emplace_back("image_input_dim", std::to_string(model.image.shape().input_dim));
  ckpt.config.emplace_back("text_input_dim", std::to_string(model.text.shape().input_dim));
  append_parameters(ckpt, "image.", model.image.parameters());
  append_parameters(ckpt, "text.", model.text.parameters());
  return ckpt;
}

AlignmentModel alignment_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::Alignment) throw FormatError("checkpoint does not hold an alignment model");
  const std::size_t hidden = parse_unsigned(ckpt.config_value("hidden_dim"), "hidden_dim");
  const std::size_t output = parse_unsigned(ckpt.config_value("output_dim"), "output_dim");
  const bool bypass = parse_bool(ckpt.config_value("bypass"), "bypass");
  const std::size_t image_in = parse_unsigned(ckpt.config_value("image_input_dim"), "image_input_dim");
  const std::size_t text_in = parse_unsigned(ckpt.config_value("text_input_dim"), "text_input_dim");
  AlignmentModel model{ProjectionEncoder({image_in, hidden, output, bypass}),
                       ProjectionEncoder({text_in, hidden, output, bypass})};
  load_parameters(ckpt, "image.", model.image.parameters());
  load_parameters(ckpt, "text.", model.text.parameters());
  return model;
}

}  // namespace moralclip
