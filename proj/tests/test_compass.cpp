#include <gtest/gtest.h>

#include <cmath>

#include "moralclip/compass.hpp"
#include "moralclip/dataset.hpp"
#include "moralclip/errors.hpp"
#include "moralclip/synthetic.hpp"
#include "test_util.hpp"

using namespace moralclip;

namespace {

constexpr auto N = Polarity::Neither;
constexpr auto V = Polarity::Virtue;
constexpr auto X = Polarity::Vice;

MoralLabelVector uniform_label(Polarity p) {
  MoralLabelVector l;
  for (Foundation f : kAllFoundations) l.set(f, p);
  return l;
}

}  // namespace

TEST(CompassForward, ZeroModelIsUniform) {
  const CompassModel m(6, 4);
  const auto probs = compass_forward(m, test::random_matrix(3, 6, 1));
  ASSERT_EQ(probs.size(), 3u);
  for (const auto& s : probs)
    for (const auto& head : s)
      for (double p : head) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  const auto labels = test::random_labels(3, 2);
  EXPECT_NEAR(compass_loss(probs, labels), 5.0 * std::log(3.0), 1e-12);
}

TEST(CompassForward, TriplesAreDistributions) {
  Rng rng(3);
  const auto m = CompassModel::initialized(8, 5, rng);
  Matrix x = test::random_matrix(20, 8, 4);
  for (double& v : x.values()) v *= 50.0;  // saturating logits
  for (const auto& s : compass_forward(m, x)) {
    for (const auto& head : s) {
      EXPECT_NEAR(head[0] + head[1] + head[2], 1.0, 1e-9);
      for (double p : head) EXPECT_GE(p, 0.0);
    }
  }
  EXPECT_THROW(compass_forward(m, test::random_matrix(2, 7, 1)), ValidationError);
}

TEST(CompassForward, LossIsSummedCrossEntropy) {
  HeadProbabilities p{};
  for (auto& head : p) head = {0.5, 0.25, 0.25};
  const std::vector<HeadProbabilities> probs = {p, p};
  const std::vector<MoralLabelVector> labels = {uniform_label(N), uniform_label(X)};
  // Per foundation: mean of -ln 0.5 and -ln 0.25.
  EXPECT_NEAR(compass_loss(probs, labels), 5.0 * 0.5 * (std::log(2.0) + std::log(4.0)), 1e-12);
  auto bad = probs;
  bad[0][2] = {0.5, 0.5, 0.5};
  EXPECT_THROW(compass_loss(bad, labels), ValidationError);
  EXPECT_THROW(compass_loss(probs, std::vector<MoralLabelVector>(1)), ValidationError);
}

TEST(CompassPredict, ArgmaxAndTieOrder) {
  EXPECT_EQ(argmax_polarity({0.2, 0.5, 0.3}), V);
  EXPECT_EQ(argmax_polarity({0.2, 0.3, 0.5}), X);
  EXPECT_EQ(argmax_polarity({1.0 / 3, 1.0 / 3, 1.0 / 3}), N);
  EXPECT_EQ(argmax_polarity({0.2, 0.4, 0.4}), X);
  EXPECT_EQ(argmax_polarity({0.4, 0.4, 0.2}), N);
  HeadProbabilities p{};
  for (auto& head : p) head = {0.1, 0.1, 0.8};
  p[1] = {0.1, 0.8, 0.1};
  EXPECT_EQ(serialize_label(predict_label(p)), "xvxxx");
}

TEST(CompassMetrics, PerfectAndAllNeither) {
  const std::vector<MoralLabelVector> truth = {uniform_label(N), uniform_label(V), uniform_label(X)};
  const auto perfect = classification_metrics(truth, truth);
  EXPECT_DOUBLE_EQ(perfect.average.f1, 1.0);
  EXPECT_DOUBLE_EQ(perfect.average.accuracy, 1.0);
  const std::vector<MoralLabelVector> neither(3, uniform_label(N));
  const auto m = classification_metrics(truth, neither);
  // Neither: precision 1/3, recall 1, F1 1/2; Virtue and Vice: 0 throughout.
  EXPECT_NEAR(m.average.recall, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.average.precision, 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(m.average.f1, 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(m.average.accuracy, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(m.samples, 3u);
  EXPECT_THROW(classification_metrics(truth, std::vector<MoralLabelVector>(2)), ValidationError);
  EXPECT_THROW(classification_metrics({}, {}), ValidationError);
}

TEST(CompassMetrics, PerfectWithAbsentClassIsBelowOne) {
  // Absent classes contribute 0 to the macro average.
  const std::vector<MoralLabelVector> truth = {uniform_label(N), uniform_label(V)};
  EXPECT_NEAR(classification_metrics(truth, truth).average.f1, 2.0 / 3.0, 1e-15);
}

TEST(CompassSchedule, MonotoneRunNeverReduces) {
  CompassConfig cfg;
  std::vector<double> f1;
  for (int i = 0; i < 20; ++i) f1.push_back(0.01 * (i + 1));
  const auto log = schedule_for(cfg, f1);
  ASSERT_EQ(log.size(), 20u);
  for (const auto& e : log) {
    EXPECT_FALSE(e.lr_reduced);
    EXPECT_FALSE(e.stopped);
    EXPECT_EQ(e.learning_rate, 1e-4);
  }
}

TEST(CompassSchedule, ScriptedStall) {
  CompassConfig cfg;
  cfg.max_epochs = 40;
  // Improves through epoch 5, flat afterwards.
  std::vector<double> f1 = {0.1, 0.2, 0.3, 0.4, 0.5};
  f1.resize(40, 0.5);
  const auto log = schedule_for(cfg, f1);
  // Reduction on stall epoch patience+1 (epoch 9), then every 4 epochs.
  std::vector<std::size_t> reduced;
  for (const auto& e : log)
    if (e.lr_reduced) reduced.push_back(e.epoch);
  EXPECT_EQ(reduced, (std::vector<std::size_t>{9, 13, 17}));
  EXPECT_NEAR(log[9].learning_rate, 1e-5, 1e-20);
  EXPECT_NEAR(log[13].learning_rate, 1e-6, 1e-21);
  // Eight non-improving epochs after the warmup: 11..18.
  ASSERT_EQ(log.size(), 18u);
  EXPECT_TRUE(log.back().stopped);
}

TEST(CompassSchedule, LateImprovementResetsStop) {
  CompassConfig cfg;
  cfg.max_epochs = 40;
  std::vector<double> f1(40, 0.5);
  f1[14] = 0.6;  // epoch 15
  const auto log = schedule_for(cfg, f1);
  ASSERT_EQ(log.size(), 23u);
  EXPECT_TRUE(log.back().stopped);
  // Plateau counter also restarts at epoch 15.
  EXPECT_TRUE(log[18].lr_reduced);  // epoch 19
}

TEST(CompassSchedule, Validation) {
  CompassConfig cfg;
  cfg.plateau_factor = 1.5;
  EXPECT_THROW(validate(cfg), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(validate(cfg), ValidationError);
}

TEST(CompassTrain, SeparableCorpusAndLabeling) {
  SyntheticCorpusConfig sc;
  sc.n_samples = 1500;
  sc.feature_dim = 24;
  sc.moral_signal_strength = 0.0;
  sc.semantic_strength = 0.0;
  sc.label_signal_strength = 5.0;
  sc.captions_per_sample = 1;
  sc.seed = 12;
  const auto corpus = synthesize_corpus(sc);
  const auto split = stratified_split(corpus.records, {0.15, 0.15, 2});
  CompassConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.trunk_dim = 32;
  cfg.seed = 4;
  const auto result = train_compass(cfg, select_split(split, Split::Train), select_split(split, Split::Val), corpus.images);
  EXPECT_GE(result.best_epoch, 1u);
  EXPECT_GE(evaluate_compass(result.model, select_split(split, Split::Test), corpus.images).average.f1, 0.9);
  EXPECT_EQ(train_compass(cfg, select_split(split, Split::Train), select_split(split, Split::Val), corpus.images).model,
            result.model);

  const auto labeled = compass_label(result.model, select_split(split, Split::Test), corpus.images);
  for (const auto& r : labeled) EXPECT_EQ(r.provenance, Provenance::Compass);

  const auto ckpt = compass_checkpoint(result.model, cfg);
  const auto back = compass_from_checkpoint(decode_checkpoint(encode_checkpoint(ckpt)));
  EXPECT_EQ(predict_labels(back, corpus.images.to_matrix()), predict_labels(result.model, corpus.images.to_matrix()));
  EXPECT_THROW(train_compass(cfg, {}, select_split(split, Split::Val), corpus.images), ValidationError);
}
