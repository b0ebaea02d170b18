#include <gtest/gtest.h>

#include <set>
#include <utility>

#include "moralclip/errors.hpp"
#include "moralclip/labels.hpp"

using namespace moralclip;

namespace {

// Independent oracle: the active set as a std::set of (foundation index, polarity char).
std::set<std::pair<int, char>> oracle_set(const std::string& encoded) {
  std::set<std::pair<int, char>> out;
  for (int f = 0; f < 5; ++f) {
    if (encoded[f] != 'n') out.insert({f, encoded[f]});
  }
  return out;
}

std::string oracle_encode(int code) {
  std::string s(5, 'n');
  for (int f = 4; f >= 0; --f) {  // Care is the most significant digit
    const int digit = code % 3;
    code /= 3;
    s[f] = digit == 0 ? 'n' : (digit == 1 ? 'v' : 'x');
  }
  return s;
}

double oracle_similarity(const std::string& a, const std::string& b) {
  const auto A = oracle_set(a), B = oracle_set(b);
  std::set<std::pair<int, char>> inter, uni = A;
  for (const auto& e : B) {
    if (A.contains(e)) inter.insert(e);
    uni.insert(e);
  }
  if (uni.empty()) return 1.0;
  return 2.0 * static_cast<double>(inter.size()) / static_cast<double>(uni.size()) - 1.0;
}

}  // namespace

TEST(Labels, ParseExamples) {
  EXPECT_TRUE(parse_label("nnnnn").is_neutral());
  const auto care = parse_label("vnnnn");
  EXPECT_EQ(care[Foundation::Care], Polarity::Virtue);
  for (Foundation f : {Foundation::Fairness, Foundation::InGroup, Foundation::Authority, Foundation::Purity}) {
    EXPECT_EQ(care[f], Polarity::Neither);
  }
  const auto mixed = parse_label("vxnvn");
  EXPECT_EQ(mixed[Foundation::Care], Polarity::Virtue);
  EXPECT_EQ(mixed[Foundation::Fairness], Polarity::Vice);
  EXPECT_EQ(mixed[Foundation::InGroup], Polarity::Neither);
  EXPECT_EQ(mixed[Foundation::Authority], Polarity::Virtue);
  EXPECT_EQ(serialize_label(mixed), "vxnvn");
}

TEST(Labels, ParseRejectsMalformedInput) {
  EXPECT_THROW(parse_label("vnnn"), FormatError);
  EXPECT_THROW(parse_label("vnnnnn"), FormatError);
  try {
    parse_label("vnqnn");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos) << e.what();
  }
}

TEST(Labels, RoundTripAll243) {
  std::set<std::string> seen;
  for (std::uint16_t c = 0; c < kLabelVectorCount; ++c) {
    const auto label = MoralLabelVector::from_code(c);
    const auto s = serialize_label(label);
    EXPECT_EQ(parse_label(s), label);
    EXPECT_EQ(label.code(), c);
    EXPECT_EQ(s, oracle_encode(c));
    seen.insert(s);
  }
  EXPECT_EQ(seen.size(), 243u);
}

TEST(Labels, ActiveSetExamples) {
  EXPECT_TRUE(active_set(parse_label("nnnnn")).empty());
  const auto one = active_set(parse_label("vnnnn"));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].foundation, Foundation::Care);
  EXPECT_EQ(one[0].polarity, Polarity::Virtue);
  const auto five = active_set(parse_label("vxvxv"));
  ASSERT_EQ(five.size(), 5u);
  const Polarity expect[] = {Polarity::Virtue, Polarity::Vice, Polarity::Virtue, Polarity::Vice, Polarity::Virtue};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(five[i].foundation, kAllFoundations[i]);
    EXPECT_EQ(five[i].polarity, expect[i]);
  }
}

TEST(Labels, SimilarityExamples) {
  EXPECT_EQ(moral_similarity(parse_label("vxnnn"), parse_label("vxnnn")), 1.0);
  EXPECT_EQ(moral_similarity(parse_label("vnnnn"), parse_label("nxnnn")), -1.0);
  EXPECT_EQ(moral_similarity(parse_label("vnnnn"), parse_label("vvnnn")), 0.0);
  EXPECT_EQ(moral_similarity(parse_label("nnnnn"), parse_label("nnnnn")), 1.0);
  // one side empty, other not: union non-empty, intersection empty
  EXPECT_EQ(moral_similarity(parse_label("nnnnn"), parse_label("vnnnn")), -1.0);
}

TEST(Labels, SharesLabelExamples) {
  EXPECT_TRUE(shares_label(parse_label("vnnnn"), parse_label("vxnnn")));
  EXPECT_FALSE(shares_label(parse_label("vnnnn"), parse_label("xnnnn")));
  EXPECT_TRUE(shares_label(parse_label("nnnnn"), parse_label("nnnnn")));
  EXPECT_FALSE(shares_label(parse_label("nnnnn"), parse_label("vnnnn")));
}

TEST(Labels, CollapseExamples) {
  EXPECT_EQ(collapse_polarity(parse_label("nnnnn")), PolarityClass::Neutral);
  EXPECT_EQ(collapse_polarity(parse_label("vnvnn")), PolarityClass::Virtue);
  EXPECT_EQ(collapse_polarity(parse_label("nxnnx")), PolarityClass::Vice);
  EXPECT_EQ(collapse_polarity(parse_label("vxnnn")), PolarityClass::Mixed);
}

TEST(Labels, ExhaustivePairProperties) {
  for (int a = 0; a < 243; ++a) {
    const auto la = MoralLabelVector::from_code(static_cast<std::uint16_t>(a));
    const auto sa = oracle_encode(a);
    EXPECT_EQ(moral_similarity(la, la), 1.0);
    for (int b = 0; b < 243; ++b) {
      const auto lb = MoralLabelVector::from_code(static_cast<std::uint16_t>(b));
      const auto sb = oracle_encode(b);
      const double s = moral_similarity(la, lb);
      ASSERT_EQ(s, oracle_similarity(sa, sb)) << sa << " " << sb;
      ASSERT_EQ(s, moral_similarity(lb, la));
      ASSERT_GE(s, -1.0);
      ASSERT_LE(s, 1.0);
      const auto A = oracle_set(sa), B = oracle_set(sb);
      bool intersect = false;
      for (const auto& e : A) intersect = intersect || B.contains(e);
      const bool both_empty = A.empty() && B.empty();
      ASSERT_EQ(shares_label(la, lb), intersect || both_empty);
      // -1 exactly when nothing is shared but something is active (one side may be empty).
      ASSERT_EQ(s == -1.0, !intersect && !both_empty) << sa << " " << sb;
      if (shares_label(la, lb)) ASSERT_GT(s, -1.0);
    }
  }
}

TEST(Labels, CollapseIsMixedIffBothPolarities) {
  for (int c = 0; c < 243; ++c) {
    const auto s = oracle_encode(c);
    const bool v = s.find('v') != std::string::npos, x = s.find('x') != std::string::npos;
    const auto cls = collapse_polarity(parse_label(s));
    EXPECT_EQ(cls == PolarityClass::Mixed, v && x);
    if (!v && !x) EXPECT_EQ(cls, PolarityClass::Neutral);
    if (v && !x) EXPECT_EQ(cls, PolarityClass::Virtue);
    if (!v && x) EXPECT_EQ(cls, PolarityClass::Vice);
  }
}
