#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <limits>

#include "moralclip/binary_io.hpp"
#include "moralclip/features.hpp"
#include "moralclip/rng.hpp"
#include "moralclip/synthetic.hpp"
#include "test_util.hpp"

using namespace moralclip;

TEST(Normalize, Examples) {
  const auto v = normalize(std::vector<double>{3.0, 4.0});
  EXPECT_NEAR(v[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1], 0.8, 1e-15);
  const auto u = normalize(std::vector<double>{0.0, 1.0, 0.0});
  EXPECT_EQ(u, (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_THROW(normalize(std::vector<double>{0.0, 0.0}), DegenerateInputError);

  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> r(7);
    for (auto& x : r) x = rng.normal();
    const auto once = normalize(r);
    const auto twice = normalize(once);
    EXPECT_NEAR(l2_norm(once), 1.0, 1e-12);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-15);
  }
}

TEST(Cosine, Examples) {
  const Matrix a = test::random_matrix(4, 6, 1);
  const auto self = cosine_matrix(a, a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(self(i, i), 1.0, 1e-12);

  Matrix x(1, 2), y(1, 2);
  x(0, 0) = 1.0;
  y(0, 1) = 2.0;
  EXPECT_EQ(cosine_matrix(x, y, 0.07)(0, 0), 0.0);
  Matrix p(1, 2);
  p(0, 0) = 5.0;
  EXPECT_NEAR(cosine_matrix(x, p, 0.07)(0, 0), 1.0 / 0.07, 1e-12);
  EXPECT_NEAR(1.0 / 0.07, 14.2857, 1e-4);
}

TEST(Cosine, MatchesBruteForceAndTransposes) {
  const Matrix a = test::random_matrix(5, 8, 2), b = test::random_matrix(3, 8, 3);
  const auto ab = cosine_matrix(a, b), ba = cosine_matrix(b, a);
  EXPECT_FALSE(ab.temperature_applied);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double d = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        d += a(i, k) * b(j, k);
        na += a(i, k) * a(i, k);
        nb += b(j, k) * b(j, k);
      }
      EXPECT_NEAR(ab(i, j), d / std::sqrt(na * nb), 1e-12);
      EXPECT_NEAR(ab(i, j), ba(j, i), 1e-12);
      EXPECT_LE(std::abs(ab(i, j)), 1.0 + 1e-6);
    }
  }
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_matrix(Matrix(2, 3, 1.0), Matrix(2, 4, 1.0)), ValidationError);
  EXPECT_THROW(cosine_matrix(Matrix(2, 3, 1.0), Matrix(2, 3, 1.0), 0.0), ValidationError);
  EXPECT_THROW(cosine_matrix(Matrix(2, 3, 1.0), Matrix(2, 3, 1.0), -1.0), ValidationError);
}

TEST(FeatureBank, Invariants) {
  EXPECT_THROW(FeatureBank(0), ValidationError);
  FeatureBank bank(2);
  bank.add("a", std::vector<float>{1.0f, 2.0f});
  EXPECT_THROW(bank.add("a", std::vector<float>{1.0f, 2.0f}), ValidationError);
  EXPECT_THROW(bank.add("b", std::vector<float>{1.0f}), ValidationError);
  EXPECT_EQ(bank.index_of("a"), 0u);
  EXPECT_THROW(bank.index_of("zzz"), ValidationError);
}

TEST(BankFormat, EmptyAndSingleRowRoundTrip) {
  const FeatureBank empty(8);
  const auto bytes = encode_bank(empty);
  EXPECT_EQ(bytes.size(), 16u);
  EXPECT_EQ(decode_bank(bytes), empty);
  EXPECT_EQ(decode_bank(bytes).dim(), 8u);

  FeatureBank one(3);
  one.add("only", std::vector<float>{-0.0f, 1.5f, std::numeric_limits<float>::denorm_min()});
  EXPECT_EQ(decode_bank(encode_bank(one)), one);
}

TEST(BankFormat, ByteLayout) {
  FeatureBank bank(2);
  bank.add("ab", std::vector<float>{1.0f, -2.0f});
  const auto b = encode_bank(bank);
  const std::vector<std::uint8_t> expected = {'M', 'C', 'F', 'B', 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 'a', 'b',
                                              0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(b, expected);
}

TEST(BankFormat, LargeBankSizeAndFileRoundTrip) {
  Rng rng(11);
  FeatureBank bank(24);
  std::size_t id_bytes = 0;
  std::vector<float> v(24);
  for (int r = 0; r < 1000; ++r) {
    for (auto& x : v) x = static_cast<float>(rng.normal());
    std::string id = "sample-" + std::to_string(r * 7919);
    id_bytes += id.size();
    bank.add(id, std::span<const float>(v));
  }
  const auto bytes = encode_bank(bank);
  EXPECT_EQ(bytes.size(), 16 + (2 * 1000 + id_bytes) + 4 * 24 * 1000);
  EXPECT_EQ(bytes.size(), encoded_bank_size(bank));

  test::TempDir dir;
  write_bank(bank, dir.path / "b.mcfb");
  const FeatureBank back = read_bank(dir.path / "b.mcfb");
  EXPECT_EQ(back, bank);
  EXPECT_EQ(read_file_bytes(dir.path / "b.mcfb"), bytes);
}

namespace {

BinaryErrc decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_bank(bytes);
  } catch (const BinaryFormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return BinaryErrc::BadMagic;
}

}  // namespace

TEST(BankFormat, DistinctErrors) {
  FeatureBank bank(2);
  bank.add("a", std::vector<float>{1.0f, 2.0f});
  bank.add("b", std::vector<float>{3.0f, 4.0f});
  const auto good = encode_bank(bank);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), BinaryErrc::BadMagic);

  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(decode_error(bad_version), BinaryErrc::VersionMismatch);

  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, good.size() - 1, good.size() - 9}) {
    EXPECT_EQ(decode_error({good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut)}), BinaryErrc::Truncated)
        << cut;
  }

  auto dup = good;
  dup[16 + 2] = 'b';  // first id becomes "b"
  EXPECT_EQ(decode_error(dup), BinaryErrc::DuplicateId);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_error(trailing), BinaryErrc::TrailingBytes);

  auto nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 16 + 3, &q, 4);
  EXPECT_EQ(decode_error(nan), BinaryErrc::NonFinite);
}

TEST(BankFormat, WriteRejectsNonFinite) {
  for (float bad : {std::numeric_limits<float>::quiet_NaN(), std::numeric_limits<float>::infinity(),
                    -std::numeric_limits<float>::infinity()}) {
    FeatureBank bank(2);
    bank.add("a", std::vector<float>{1.0f, bad});
    try {
      encode_bank(bank);
      FAIL();
    } catch (const BinaryFormatError& e) {
      EXPECT_EQ(e.code(), BinaryErrc::NonFinite);
    }
  }
}

TEST(BankFormat, MissingFileIsIoError) { EXPECT_THROW(read_bank("/nonexistent/x.mcfb"), IoError); }

// --- synthetic corpus ---

TEST(Synthetic, Deterministic) {
  SyntheticCorpusConfig cfg;
  cfg.n_samples = 300;
  cfg.feature_dim = 16;
  const auto a = synthesize_corpus(cfg), b = synthesize_corpus(cfg);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.texts, b.texts);
  cfg.seed = 8;
  EXPECT_FALSE(synthesize_corpus(cfg).images == a.images);
}

TEST(Synthetic, InvalidDistribution) {
  SyntheticCorpusConfig cfg;
  cfg.label_distribution = {{PolarityClass::Virtue, 0.5}, {PolarityClass::Vice, 0.4}};
  EXPECT_THROW(synthesize_corpus(cfg), ValidationError);
  cfg.label_distribution = {{PolarityClass::Virtue, 1.2}, {PolarityClass::Vice, -0.2}};
  EXPECT_THROW(synthesize_corpus(cfg), ValidationError);
}

TEST(Synthetic, LabelsFollowDistribution) {
  SyntheticCorpusConfig cfg;
  cfg.n_samples = 4000;
  cfg.feature_dim = 8;
  const auto c = synthesize_corpus(cfg);
  std::map<PolarityClass, double> freq;
  for (const auto& r : c.records) freq[collapse_polarity(r.label)] += 1.0 / 4000.0;
  for (const auto& [cls, p] : cfg.label_distribution) EXPECT_NEAR(freq[cls], p, 0.03) << to_string(cls);
  for (const auto& r : c.records) {
    EXPECT_TRUE(c.images.find(r.image_feature_id).has_value());
    for (const auto& cap : r.captions) EXPECT_TRUE(c.texts.find(cap).has_value());
  }
}

namespace {

std::vector<std::vector<double>> class_rows(const SyntheticCorpus& c, PolarityClass cls) {
  std::vector<std::vector<double>> out;
  for (const auto& r : c.records) {
    if (collapse_polarity(r.label) != cls) continue;
    const auto row = c.images.row(c.images.index_of(r.image_feature_id));
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

}  // namespace

TEST(Synthetic, ZeroSignalMeansIndistinguishable) {
  SyntheticCorpusConfig cfg;
  cfg.n_samples = 2000;
  cfg.feature_dim = 16;
  cfg.moral_signal_strength = 0.0;
  cfg.seed = 21;
  const auto c = synthesize_corpus(cfg);
  const auto virtue = class_rows(c, PolarityClass::Virtue), vice = class_rows(c, PolarityClass::Vice);
  // Sum over dimensions of squared Welch z statistics ~ chi-square(dim) under equal means.
  double stat = 0.0;
  for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
    auto moments = [d](const std::vector<std::vector<double>>& rows) {
      double m = 0, s = 0;
      for (const auto& r : rows) m += r[d];
      m /= static_cast<double>(rows.size());
      for (const auto& r : rows) s += (r[d] - m) * (r[d] - m);
      return std::pair{m, s / static_cast<double>(rows.size() - 1)};
    };
    const auto [m1, v1] = moments(virtue);
    const auto [m2, v2] = moments(vice);
    const double z = (m1 - m2) / std::sqrt(v1 / static_cast<double>(virtue.size()) + v2 / static_cast<double>(vice.size()));
    stat += z * z;
  }
  const boost::math::chi_squared chi(static_cast<double>(cfg.feature_dim));
  const double p = boost::math::cdf(boost::math::complement(chi, stat));
  EXPECT_GT(p, 0.01) << "chi-square statistic " << stat;
}

TEST(Synthetic, StrongSignalLinearlySeparable) {
  SyntheticCorpusConfig cfg;
  cfg.n_samples = 2000;
  cfg.feature_dim = 64;
  cfg.moral_signal_strength = 5.0;
  cfg.noise_scale = 1.0;
  const auto c = synthesize_corpus(cfg);
  const auto virtue = class_rows(c, PolarityClass::Virtue), vice = class_rows(c, PolarityClass::Vice);
  // Probe: nearest class mean fitted on the first half, scored on the second half.
  auto mean_of_half = [](const std::vector<std::vector<double>>& rows) {
    std::vector<double> m(rows[0].size());
    const std::size_t h = rows.size() / 2;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t d = 0; d < m.size(); ++d) m[d] += rows[i][d] / static_cast<double>(h);
    return m;
  };
  const auto mv = mean_of_half(virtue), mx = mean_of_half(vice);
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };
  std::size_t correct = 0, total = 0;
  for (std::size_t i = virtue.size() / 2; i < virtue.size(); ++i, ++total) correct += dist(virtue[i], mv) < dist(virtue[i], mx);
  for (std::size_t i = vice.size() / 2; i < vice.size(); ++i, ++total) correct += dist(vice[i], mx) < dist(vice[i], mv);
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(total), 0.95);
}
