#include <gtest/gtest.h>

#include <cmath>

#include "moralclip/agreement.hpp"
#include "moralclip/errors.hpp"
#include "moralclip/rng.hpp"

using namespace moralclip;

namespace {

constexpr auto N = Polarity::Neither;
constexpr auto V = Polarity::Virtue;
constexpr auto X = Polarity::Vice;

// Pairwise form of nominal alpha: disagreeing ordered pairs within items, weighted by 1/(m-1),
// against disagreeing ordered pairs over all pairable values.
double alpha_oracle(const std::vector<std::vector<Polarity>>& items) {
  std::vector<Polarity> values;
  double observed = 0;
  for (const auto& u : items) {
    if (u.size() < 2) continue;
    double d = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j && u[i] != u[j]) d += 1;
    observed += d / static_cast<double>(u.size() - 1);
    values.insert(values.end(), u.begin(), u.end());
  }
  const double n = static_cast<double>(values.size());
  double expected = 0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = 0; j < values.size(); ++j)
      if (i != j && values[i] != values[j]) expected += 1;
  return 1.0 - (observed / n) / (expected / (n * (n - 1)));
}

double kappa_oracle(const std::vector<Polarity>& a, const std::vector<Polarity>& b) {
  double confusion[3][3] = {};
  for (std::size_t i = 0; i < a.size(); ++i) confusion[static_cast<int>(a[i])][static_cast<int>(b[i])] += 1;
  const double n = static_cast<double>(a.size());
  double po = 0, pe = 0;
  for (int c = 0; c < 3; ++c) {
    po += confusion[c][c] / n;
    double row = 0, col = 0;
    for (int k = 0; k < 3; ++k) {
      row += confusion[c][k];
      col += confusion[k][c];
    }
    pe += (row / n) * (col / n);
  }
  return (po - pe) / (1 - pe);
}

}  // namespace

TEST(Alpha, CanonicalExample) {
  // Coincidences: o_aa 2, o_bb 4, o_ab = o_ba 1; n_a 3, n_b 5 -> alpha = 1 - (2/8)/(30/56) = 8/15.
  const std::vector<std::vector<Polarity>> items = {{V, V}, {X, X}, {V, X}, {X, X}};
  EXPECT_NEAR(krippendorff_alpha(items), 8.0 / 15.0, 1e-12);
}

TEST(Alpha, PerfectAgreementAndErrors) {
  EXPECT_DOUBLE_EQ(krippendorff_alpha(std::vector<std::vector<Polarity>>{{V, V, V}, {N, N}, {X, X}}), 1.0);
  EXPECT_THROW(krippendorff_alpha(std::vector<std::vector<Polarity>>{{V}, {X}}), UndefinedMetricError);
  EXPECT_THROW(krippendorff_alpha(std::vector<std::vector<Polarity>>{{V, V}, {V, V}}), UndefinedMetricError);
  // Unpairable items are ignored.
  EXPECT_NEAR(krippendorff_alpha(std::vector<std::vector<Polarity>>{{V, V}, {X, X}, {V, X}, {X, X}, {N}}), 8.0 / 15.0,
              1e-12);
}

TEST(Alpha, MatchesPairwiseOracleOnRandomTables) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::vector<std::vector<Polarity>> items(2 + rng.below(19));
    const std::size_t annotators = 2 + rng.below(9);
    for (auto& u : items)
      for (std::size_t a = 0; a < annotators; ++a)
        if (rng.uniform() < 0.8) u.push_back(static_cast<Polarity>(rng.below(rng.coin() ? 2 : 3)));
    double ref;
    try {
      ref = alpha_oracle(items);
    } catch (...) {
      continue;
    }
    if (!std::isfinite(ref)) continue;
    const double a = krippendorff_alpha(items);
    EXPECT_NEAR(a, ref, 1e-9);
    EXPECT_LE(a, 1.0);
    // Item order does not matter.
    std::reverse(items.begin(), items.end());
    EXPECT_NEAR(krippendorff_alpha(items), a, 1e-12);
  }
}

TEST(Majority, Plurality) {
  EXPECT_EQ(majority_vote(std::vector<Polarity>{V, V, X}), V);
  EXPECT_FALSE(majority_vote(std::vector<Polarity>{V, X}));
  EXPECT_EQ(majority_vote(std::vector<Polarity>{N, N, N}), N);
  EXPECT_FALSE(majority_vote(std::vector<Polarity>{}));
  EXPECT_FALSE(majority_vote(std::vector<Polarity>{V, V, X, X, N}));
}

TEST(Coverage, Examples) {
  EXPECT_DOUBLE_EQ(consensus_coverage(std::vector<std::vector<Polarity>>{{V, V}, {X, X, X}}), 1.0);
  EXPECT_DOUBLE_EQ(consensus_coverage(std::vector<std::vector<Polarity>>{{V, V}, {X, V}, {N, N}, {N, X}}), 0.5);
  EXPECT_THROW(consensus_coverage(std::vector<std::vector<Polarity>>{}), UndefinedMetricError);
}

TEST(Kappa, HandExamples) {
  // p_o 4/6, p_e (2*2 + 2*3 + 2*1)/36 = 1/3 -> 0.5.
  const std::vector<Polarity> a = {V, V, N, N, X, X}, b = {V, N, N, N, X, V};
  EXPECT_NEAR(cohen_kappa(a, b), 0.5, 1e-12);
  EXPECT_NEAR(cohen_kappa(a, b), kappa_oracle(a, b), 1e-12);
  EXPECT_DOUBLE_EQ(cohen_kappa(a, a), 1.0);
  // Exact marginal product: p_o = p_e = 1/2.
  EXPECT_NEAR(cohen_kappa(std::vector<Polarity>{V, V, X, X}, std::vector<Polarity>{V, X, V, X}), 0.0, 1e-15);
  EXPECT_THROW(cohen_kappa(std::vector<Polarity>{V, V}, std::vector<Polarity>{V, V}), UndefinedMetricError);
  EXPECT_THROW(cohen_kappa(std::vector<Polarity>{V}, std::vector<Polarity>{V}), ValidationError);
  EXPECT_THROW(cohen_kappa(a, std::vector<Polarity>{V}), ValidationError);
}

TEST(Kappa, AgainstMajoritySkipsNoConsensus) {
  const std::vector<Polarity> model = {V, N, X, V, X, N, V};
  const std::vector<std::optional<Polarity>> majority = {V, std::nullopt, X, N, X, N, std::nullopt};
  const double k = cohen_kappa_majority(model, majority);
  EXPECT_NEAR(k, kappa_oracle({V, X, V, X, N}, {V, X, N, X, N}), 1e-12);
}

TEST(Kappa, MatchesOracleOnRandomSequences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 77);
    std::vector<Polarity> a, b;
    const std::size_t n = 2 + rng.below(19);
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back(static_cast<Polarity>(rng.below(3)));
      b.push_back(rng.uniform() < 0.5 ? a.back() : static_cast<Polarity>(rng.below(3)));
    }
    const double ref = kappa_oracle(a, b);
    if (!std::isfinite(ref)) continue;
    EXPECT_NEAR(cohen_kappa(a, b), ref, 1e-9);
  }
}

TEST(Screening, VarianceThreshold) {
  RatingsTable t;
  for (int i = 0; i < 6; ++i) {
    const std::string img = "img" + std::to_string(i);
    MoralLabelVector flat, varied, slight;
    for (Foundation f : kAllFoundations) varied.set(f, (i + static_cast<int>(f)) % 2 ? V : X);
    if (i == 0) slight.set(Foundation::Care, V);
    t.set("flat", img, flat);
    t.set("varied", img, varied);
    t.set("slight", img, slight);
  }
  const auto s = screen_annotators(t);
  EXPECT_EQ(s.retained, (std::vector<std::string>{"slight", "varied"}));
  ASSERT_EQ(s.excluded.size(), 1u);
  EXPECT_EQ(s.excluded[0].annotator, "flat");
  EXPECT_EQ(s.excluded[0].std_dev, 0.0);
  for (const auto& a : s.all) {
    if (a.annotator == "varied") EXPECT_DOUBLE_EQ(a.std_dev, 1.0);
    // One +1 among 30 responses: population std sqrt(1/30 - 1/900).
    if (a.annotator == "slight") EXPECT_NEAR(a.std_dev, std::sqrt(1.0 / 30 - 1.0 / 900), 1e-12);
    EXPECT_EQ(a.responses, 30u);
  }
  EXPECT_EQ(screen_annotators(t, 0.2).excluded.size(), 2u);
}

TEST(Table, ExportParsingAndReport) {
  const std::string json = R"({"ratings":[
    {"annotator_id":"a","image_id":"i1","ratings":{"care":"virtue","fairness":"vice","ingroup":"neutral","authority":"neutral","purity":"neutral"}},
    {"annotator_id":"b","image_id":"i1","ratings":{"care":"virtue","fairness":"neutral","ingroup":"neutral","authority":"neutral","purity":"neutral"}},
    {"annotator_id":"a","image_id":"i2","ratings":{"care":"vice","fairness":"vice","ingroup":"neutral","authority":"vice","purity":"neutral"}},
    {"annotator_id":"b","image_id":"i2","ratings":{"care":"vice","fairness":"vice","ingroup":"neutral","authority":"neutral","purity":"neutral"}}]})";
  const auto t = ratings_from_export_json(json);
  EXPECT_EQ(t.annotators(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.images(), (std::vector<std::string>{"i1", "i2"}));
  EXPECT_EQ(t.get("a", "i1", Foundation::Fairness), X);
  const auto care = t.item_ratings(Foundation::Care);
  EXPECT_EQ(care, (std::vector<std::vector<Polarity>>{{V, V}, {X, X}}));

  std::map<std::string, MoralLabelVector> model = {{"i1", parse_label("vnnnn")}, {"i2", parse_label("xxnnn")}};
  const auto report = agreement_report(t, &model, {100, 1});
  const auto& c = report.foundations[0];
  EXPECT_EQ(c.items, 2u);
  ASSERT_TRUE(c.alpha);
  EXPECT_DOUBLE_EQ(*c.alpha, 1.0);
  EXPECT_DOUBLE_EQ(c.consensus_coverage, 1.0);
  ASSERT_TRUE(c.kappa_majority);
  EXPECT_DOUBLE_EQ(*c.kappa_majority, 1.0);
  // Purity: everything neutral, alpha undefined.
  EXPECT_FALSE(report.foundations[4].alpha);
  EXPECT_DOUBLE_EQ(report.foundations[1].consensus_coverage, 0.5);
  EXPECT_NE(report.to_csv().find("care"), std::string::npos);
  EXPECT_THROW(ratings_from_export_json(R"({"ratings":[{"annotator_id":"a"}]})"), Error);
  EXPECT_THROW(parse_rating_word("good", "ratings.care"), ValidationError);
}

TEST(Table, AnnotatorRelabelingInvariance) {
  RatingsTable a, b;
  Rng rng(5);
  for (int i = 0; i < 12; ++i) {
    for (int r = 0; r < 3; ++r) {
      MoralLabelVector l = MoralLabelVector::from_code(static_cast<std::uint16_t>(rng.below(243)));
      a.set("ann" + std::to_string(r), "img" + std::to_string(i), l);
      b.set("z" + std::to_string(2 - r), "img" + std::to_string(i), l);
    }
  }
  const auto ra = agreement_report(a, nullptr, {50, 3}), rb = agreement_report(b, nullptr, {50, 3});
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(ra.foundations[f].alpha.has_value(), rb.foundations[f].alpha.has_value());
    if (ra.foundations[f].alpha) EXPECT_NEAR(*ra.foundations[f].alpha, *rb.foundations[f].alpha, 1e-12);
    EXPECT_EQ(ra.foundations[f].consensus_coverage, rb.foundations[f].consensus_coverage);
  }
}
