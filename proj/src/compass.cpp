#include "moralclip/compass.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moralclip/errors.hpp"
#include "moralclip/optim.hpp"
#include "moralclip/text.hpp"

namespace moralclip {

namespace {

// Parameter tensor indices.
constexpr std::size_t kTrunkW = 0;
constexpr std::size_t kTrunkB = 1;
constexpr std::size_t head_w(std::size_t f) { return 2 + 2 * f; }
constexpr std::size_t head_b(std::size_t f) { return 3 + 2 * f; }

Matrix gather_images(const Manifest& records, const FeatureBank& images) {
  std::vector<std::size_t> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    auto found = images.find(r.image_feature_id);
    if (!found) throw ValidationError("image feature '" + r.image_feature_id + "' for record '" + r.id + "' is missing");
    rows.push_back(*found);
  }
  return images.gather(rows);
}

std::vector<MoralLabelVector> labels_of(const Manifest& records) {
  std::vector<MoralLabelVector> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

Matrix trunk_forward(const CompassModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim()) {
    throw ValidationError("compass expects input dimension " + std::to_string(model.input_dim()) + ", got " +
                          std::to_string(x.cols()));
  }
  const auto& p = model.parameters();
  auto w = p.tensor(kTrunkW);
  auto b = p.tensor(kTrunkB);
  const std::size_t in = model.input_dim(), hid = model.trunk_dim();
  Matrix h(x.rows(), hid);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t k = 0; k < hid; ++k) h(r, k) = b[k] + dot(x.row(r), w.subspan(k * in, in));
  }
  return h;
}

std::vector<HeadProbabilities> heads_forward(const CompassModel& model, const Matrix& h) {
  const auto& p = model.parameters();
  const std::size_t hid = model.trunk_dim();
  std::vector<HeadProbabilities> out(h.rows());
  for (std::size_t f = 0; f < kFoundationCount; ++f) {
    auto w = p.tensor(head_w(f));
    auto b = p.tensor(head_b(f));
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t c = 0; c < kPolarityCount; ++c) out[r][f][c] = b[c] + dot(h.row(r), w.subspan(c * hid, hid));
    }
  }
  return out;
}

void softmax_in_place(std::array<double, kPolarityCount>& z) {
  const double m = std::max({z[0], z[1], z[2]});
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

}  // namespace

CompassModel::CompassModel(std::size_t input_dim, std::size_t trunk_dim) : input_dim_(input_dim), trunk_dim_(trunk_dim) {
  if (input_dim == 0 || trunk_dim == 0) throw ValidationError("compass dimensions must be positive");
  params_.add("trunk.w", trunk_dim, input_dim);
  params_.add("trunk.b", 1, trunk_dim);
  for (Foundation f : kAllFoundations) {
    params_.add(std::string(key_name(f)) + ".w", kPolarityCount, trunk_dim);
    params_.add(std::string(key_name(f)) + ".b", 1, kPolarityCount);
  }
}

CompassModel CompassModel::initialized(std::size_t input_dim, std::size_t trunk_dim, Rng& rng) {
  CompassModel m(input_dim, trunk_dim);
  auto fill = [&rng](std::span<double> w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
  };
  fill(m.params_.tensor(kTrunkW), input_dim, trunk_dim);
  for (std::size_t f = 0; f < kFoundationCount; ++f) fill(m.params_.tensor(head_w(f)), trunk_dim, kPolarityCount);
  return m;
}

std::vector<HeadProbabilities> CompassModel::logits(const Matrix& x) const {
  return heads_forward(*this, trunk_forward(*this, x));
}

std::vector<HeadProbabilities> compass_forward(const CompassModel& model, const Matrix& x) {
  auto out = model.logits(x);
  for (auto& sample : out) {
    for (auto& head : sample) softmax_in_place(head);
  }
  return out;
}

std::vector<HeadProbabilities> compass_forward(const CompassModel& model, const FeatureBank& features) {
  return compass_forward(model, features.to_matrix());
}

double compass_loss(std::span<const HeadProbabilities> probabilities, std::span<const MoralLabelVector> labels) {
  if (probabilities.size() != labels.size()) throw ValidationError("probability and label counts differ");
  if (probabilities.empty()) throw ValidationError("compass loss needs at least one sample");
  double total = 0.0;
  for (std::size_t f = 0; f < kFoundationCount; ++f) {
    double head = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      const auto& p = probabilities[i][f];
      if (std::abs(p[0] + p[1] + p[2] - 1.0) > 1e-6) {
        throw ValidationError("probability triple of sample " + std::to_string(i) + " does not sum to 1");
      }
      head -= std::log(p[static_cast<std::size_t>(labels[i][kAllFoundations[f]])]);
    }
    total += head / static_cast<double>(probabilities.size());
  }
  return total;
}

CompassLossGradient compass_loss_and_gradient(const CompassModel& model, const Matrix& x,
                                              std::span<const MoralLabelVector> labels) {
  if (labels.size() != x.rows()) throw ValidationError("label count does not match batch size");
  if (x.rows() == 0) throw ValidationError("compass loss needs at least one sample");
  const Matrix h = trunk_forward(model, x);
  auto probs = heads_forward(model, h);
  for (auto& sample : probs) {
    for (auto& head : sample) softmax_in_place(head);
  }
  CompassLossGradient out;
  out.loss = compass_loss(probs, labels);

  const auto& params = model.parameters();
  const auto& layout = params.layout();
  out.grad.assign(params.size(), 0.0);
  const std::size_t n = x.rows(), in = model.input_dim(), hid = model.trunk_dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix grad_h(n, hid);
  for (std::size_t f = 0; f < kFoundationCount; ++f) {
    auto w = params.tensor(head_w(f));
    double* gw = out.grad.data() + layout[head_w(f)].offset;
    double* gb = out.grad.data() + layout[head_b(f)].offset;
    for (std::size_t i = 0; i < n; ++i) {
      const auto target = static_cast<std::size_t>(labels[i][kAllFoundations[f]]);
      auto hr = h.row(i);
      auto ghr = grad_h.row(i);
      for (std::size_t c = 0; c < kPolarityCount; ++c) {
        const double dz = (probs[i][f][c] - (c == target ? 1.0 : 0.0)) * inv_n;
        gb[c] += dz;
        for (std::size_t k = 0; k < hid; ++k) {
          gw[c * hid + k] += dz * hr[k];
          ghr[k] += dz * w[c * hid + k];
        }
      }
    }
  }
  double* gtw = out.grad.data() + layout[kTrunkW].offset;
  double* gtb = out.grad.data() + layout[kTrunkB].offset;
  for (std::size_t i = 0; i < n; ++i) {
    auto xr = x.row(i);
    auto ghr = grad_h.row(i);
    for (std::size_t k = 0; k < hid; ++k) {
      gtb[k] += ghr[k];
      for (std::size_t j = 0; j < in; ++j) gtw[k * in + j] += ghr[k] * xr[j];
    }
  }
  return out;
}

Polarity argmax_polarity(const std::array<double, kPolarityCount>& p) {
  static constexpr std::array<Polarity, 3> kPriority = {Polarity::Neither, Polarity::Vice, Polarity::Virtue};
  Polarity best = kPriority[0];
  for (Polarity c : kPriority) {
    if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

MoralLabelVector predict_label(const HeadProbabilities& p) {
  MoralLabelVector label;
  for (std::size_t f = 0; f < kFoundationCount; ++f) label.set(kAllFoundations[f], argmax_polarity(p[f]));
  return label;
}

std::vector<MoralLabelVector> predict_labels(const CompassModel& model, const Matrix& x) {
  const auto probs = compass_forward(model, x);
  std::vector<MoralLabelVector> out;
  out.reserve(probs.size());
  for (const auto& p : probs) out.push_back(predict_label(p));
  return out;
}

CompassMetrics classification_metrics(std::span<const MoralLabelVector> truth,
                                      std::span<const MoralLabelVector> predicted) {
  if (truth.size() != predicted.size()) throw ValidationError("truth and prediction counts differ");
  if (truth.empty()) throw ValidationError("cannot evaluate on an empty set");
  CompassMetrics m;
  m.samples = truth.size();
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  for (std::size_t f = 0; f < kFoundationCount; ++f) {
    std::array<std::array<double, kPolarityCount>, kPolarityCount> confusion{};  // [true][pred]
    for (std::size_t i = 0; i < truth.size(); ++i) {
      confusion[static_cast<std::size_t>(truth[i][kAllFoundations[f]])]
               [static_cast<std::size_t>(predicted[i][kAllFoundations[f]])] += 1.0;
    }
    ClassificationMetrics& out = m.per_foundation[f];
    double correct = 0.0;
    for (std::size_t c = 0; c < kPolarityCount; ++c) {
      double predicted_c = 0.0, true_c = 0.0;
      for (std::size_t k = 0; k < kPolarityCount; ++k) {
        predicted_c += confusion[k][c];
        true_c += confusion[c][k];
      }
      const double tp = confusion[c][c];
      correct += tp;
      const double p = ratio(tp, predicted_c);
      const double r = ratio(tp, true_c);
      out.precision += p / kPolarityCount;
      out.recall += r / kPolarityCount;
      out.f1 += ratio(2.0 * p * r, p + r) / kPolarityCount;
    }
    out.accuracy = correct / static_cast<double>(truth.size());
    m.average.accuracy += out.accuracy / kFoundationCount;
    m.average.precision += out.precision / kFoundationCount;
    m.average.recall += out.recall / kFoundationCount;
    m.average.f1 += out.f1 / kFoundationCount;
  }
  return m;
}

std::string CompassMetrics::to_csv() const {
  std::string out = "foundation,accuracy,precision,recall,f1\n";
  auto row = [&out](std::string_view name, const ClassificationMetrics& c) {
    out += std::string(name) + "," + format_real(c.accuracy) + "," + format_real(c.precision) + "," +
           format_real(c.recall) + "," + format_real(c.f1) + "\n";
  };
  for (std::size_t f = 0; f < kFoundationCount; ++f) row(key_name(kAllFoundations[f]), per_foundation[f]);
  row("average", average);
  return out;
}

CompassMetrics evaluate_compass(const CompassModel& model, const Manifest& records, const FeatureBank& images) {
  if (records.empty()) throw ValidationError("cannot evaluate on an empty set");
  const auto predicted = predict_labels(model, gather_images(records, images));
  const auto truth = labels_of(records);
  return classification_metrics(truth, predicted);
}

void validate(const CompassConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw ValidationError("batch_size and max_epochs must be positive");
  if (!(cfg.plateau_factor > 0.0 && cfg.plateau_factor < 1.0)) throw ValidationError("plateau_factor must lie in (0, 1)");
  if (cfg.trunk_dim < 1) throw ValidationError("trunk_dim must be positive");
}

bool PlateauScheduler::observe(double metric, double& learning_rate) {
  if (!has_best_ || metric > best_) {
    has_best_ = true;
    best_ = metric;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ > patience_) {
    learning_rate *= factor_;
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

bool EarlyStopper::observe(std::size_t epoch, double metric) {
  const bool improved = !has_best_ || metric > best_;
  if (improved) {
    has_best_ = true;
    best_ = metric;
  }
  if (epoch <= warmup_) return false;
  bad_epochs_ = improved ? 0 : bad_epochs_ + 1;
  return bad_epochs_ >= patience_;
}

namespace {

// Shared by schedule_for and train_compass so both follow identical rules.
struct EpochController {
  explicit EpochController(const CompassConfig& cfg)
      : lr(cfg.learning_rate),
        plateau(cfg.plateau_factor, cfg.plateau_patience),
        stopper(cfg.early_stop_patience, cfg.early_stop_warmup) {}

  CompassEpoch finish(std::size_t epoch, double train_loss, double val_f1) {
    CompassEpoch e{epoch, train_loss, val_f1, lr, false, false};
    e.lr_reduced = plateau.observe(val_f1, lr);
    e.stopped = stopper.observe(epoch, val_f1);
    return e;
  }

  double lr;
  PlateauScheduler plateau;
  EarlyStopper stopper;
};

}  // namespace

std::vector<CompassEpoch> schedule_for(const CompassConfig& cfg, std::span<const double> val_f1) {
  validate(cfg);
  EpochController ctl(cfg);
  std::vector<CompassEpoch> out;
  for (std::size_t i = 0; i < val_f1.size() && i < cfg.max_epochs; ++i) {
    out.push_back(ctl.finish(i + 1, 0.0, val_f1[i]));
    if (out.back().stopped) break;
  }
  return out;
}

std::string CompassTrainResult::log_csv() const {
  std::string out = "epoch,train_loss,val_macro_f1,learning_rate,lr_reduced,stopped\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + format_real(e.train_loss) + "," + format_real(e.val_macro_f1) + "," +
           format_real(e.learning_rate) + "," + (e.lr_reduced ? "1" : "0") + "," + (e.stopped ? "1" : "0") + "\n";
  }
  return out;
}

CompassTrainResult train_compass(const CompassConfig& cfg, const Manifest& train, const Manifest& val,
                                 const FeatureBank& images) {
  validate(cfg);
  if (train.empty()) throw ValidationError("compass train set is empty");
  if (val.empty()) throw ValidationError("compass validation set is empty");
  const Matrix x_train = gather_images(train, images);
  const Matrix x_val = gather_images(val, images);
  const auto y_train = labels_of(train);
  const auto y_val = labels_of(val);

  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(1);
  CompassModel model = CompassModel::initialized(images.dim(), cfg.trunk_dim, init_rng);
  CompassModel best = model;
  std::size_t best_epoch = 0;
  double best_f1 = -std::numeric_limits<double>::infinity();
  AdamOptimizer opt(model.parameters().size(), {});
  EpochController ctl(cfg);
  std::vector<CompassEpoch> log;

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Matrix xb(end - start, x_train.cols());
      std::vector<MoralLabelVector> yb;
      for (std::size_t k = start; k < end; ++k) {
        auto src = x_train.row(order[k]);
        std::copy(src.begin(), src.end(), xb.row(k - start).begin());
        yb.push_back(y_train[order[k]]);
      }
      const auto lg = compass_loss_and_gradient(model, xb, yb);
      if (!std::isfinite(lg.loss)) throw Error("compass loss became non-finite at epoch " + std::to_string(epoch));
      opt.step(model.parameters().flat(), lg.grad, ctl.lr);
      loss_sum += lg.loss;
      ++batches;
    }
    const double f1 = classification_metrics(y_val, predict_labels(model, x_val)).average.f1;
    log.push_back(ctl.finish(epoch, loss_sum / static_cast<double>(batches), f1));
    if (f1 > best_f1) {
      best_f1 = f1;
      best_epoch = epoch;
      best = model;
    }
    if (log.back().stopped) break;
  }
  return {std::move(best), best_epoch, std::move(log)};
}

Manifest compass_label(const CompassModel& model, const Manifest& records, const FeatureBank& images) {
  Manifest out = records;
  if (out.empty()) return out;
  const auto predicted = predict_labels(model, gather_images(records, images));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].label = predicted[i];
    out[i].provenance = Provenance::Compass;
  }
  return out;
}

Checkpoint compass_checkpoint(const CompassModel& model, const CompassConfig& cfg) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::Compass;
  ckpt.config = {
      {"input_dim", std::to_string(model.input_dim())},
      {"trunk_dim", std::to_string(model.trunk_dim())},
      {"learning_rate", format_real(cfg.learning_rate)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"max_epochs", std::to_string(cfg.max_epochs)},
      {"plateau_factor", format_real(cfg.plateau_factor)},
      {"plateau_patience", std::to_string(cfg.plateau_patience)},
      {"early_stop_patience", std::to_string(cfg.early_stop_patience)},
      {"early_stop_warmup", std::to_string(cfg.early_stop_warmup)},
      {"seed", std::to_string(cfg.seed)},
  };
  append_parameters(ckpt, "", model.parameters());
  return ckpt;
}

CompassModel compass_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::Compass) throw FormatError("checkpoint does not hold a compass model");
  CompassModel model(parse_unsigned(ckpt.config_value("input_dim"), "input_dim"),
                     parse_unsigned(ckpt.config_value("trunk_dim"), "trunk_dim"));
  load_parameters(ckpt, "", model.parameters());
  return model;
}

}  // namespace moralclip
