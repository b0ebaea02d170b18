#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "moralclip/dataset.hpp"
#include "moralclip/errors.hpp"
#include "moralclip/manifest.hpp"
#include "test_util.hpp"

using namespace moralclip;

namespace {

using FO = FoundationOutcome;

SmidRatingRow row(std::string id, std::array<std::pair<double, double>, 5> r) {
  SmidRatingRow out;
  out.image_id = std::move(id);
  for (std::size_t f = 0; f < 5; ++f) out.ratings[f] = {r[f].first, r[f].second};
  return out;
}

SampleRecord record(std::string id, std::string label, Split split = Split::Train, Source src = Source::Synthetic) {
  SampleRecord r;
  r.id = id;
  r.image_feature_id = "img-" + id;
  r.captions = {"cap-" + id};
  r.label = parse_label(label);
  r.split = split;
  r.source = src;
  return r;
}

std::multiset<std::string> train_labels(const Manifest& m) {
  std::multiset<std::string> out;
  for (const auto& r : m)
    if (r.split == Split::Train) out.insert(serialize_label(r.label));
  return out;
}

// Image refs and captions of the train split as multisets: swapping only permutes them.
std::pair<std::multiset<std::string>, std::multiset<std::string>> contents(const Manifest& m) {
  std::multiset<std::string> img, cap;
  for (const auto& r : m) {
    img.insert(r.image_feature_id + "|" + serialize_label(r.label));
    cap.insert(r.caption() + "|" + serialize_label(r.label));
  }
  return {img, cap};
}

Manifest mixed_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  static const char* kPool[] = {"nnnnn", "vnnnn", "xnnnn", "nvxnn", "vvvvv", "nnnnx"};
  Manifest m;
  for (std::size_t i = 0; i < n; ++i) m.push_back(record("r" + std::to_string(i), kPool[rng.below(6)]));
  return m;
}

}  // namespace

TEST(Classify, ThresholdGrid) {
  // Valence bands (vice / neutral / virtue) x relevance (low, both band edges, high).
  const double valence[3] = {1.8, 3.0, 4.2};
  const double relevance[4] = {1.9, 2.15, 2.84, 3.1};
  const FO expected[3][4] = {{FO::Excluded, FO::Excluded, FO::Excluded, FO::Vice},
                             {FO::Neither, FO::Excluded, FO::Excluded, FO::Excluded},
                             {FO::Excluded, FO::Excluded, FO::Excluded, FO::Virtue}};
  for (int v = 0; v < 3; ++v)
    for (int r = 0; r < 4; ++r)
      EXPECT_EQ(classify_foundation(valence[v], relevance[r]), expected[v][r]) << valence[v] << "," << relevance[r];
}

TEST(Classify, ValenceEdgesAreNeutralAndExamples) {
  EXPECT_EQ(classify_foundation(2.5, 1.0), FO::Neither);
  EXPECT_EQ(classify_foundation(3.5, 1.0), FO::Neither);
  EXPECT_EQ(classify_foundation(2.4999, 2.85), FO::Vice);
  EXPECT_EQ(classify_foundation(1.8, 3.1), FO::Vice);
  EXPECT_EQ(classify_foundation(4.2, 3.0), FO::Virtue);
  EXPECT_EQ(classify_foundation(3.0, 2.5), FO::Excluded);
  EXPECT_EQ(classify_foundation(3.0, 1.9), FO::Neither);
  EXPECT_THROW(classify_foundation(std::nan(""), 1.0), ValidationError);
  EXPECT_THROW(classify_foundation(1.0, INFINITY), ValidationError);
}

TEST(Preprocess, RetentionAndExcludedAsNeither) {
  const std::vector<SmidRatingRow> rows = {
      row("all-excluded", {{{3, 2.5}, {3, 2.5}, {3, 2.5}, {3, 2.5}, {3, 2.5}}}),
      row("one-vice", {{{3, 2.5}, {1.5, 3.5}, {3, 2.5}, {3, 2.5}, {3, 2.5}}}),
      row("mixed", {{{4.5, 3.5}, {1.5, 3.5}, {3, 1.0}, {3, 2.5}, {3, 1.0}}}),
  };
  const auto result = preprocess_smid(rows, {{"mixed", {"a caption", "another"}}});
  ASSERT_EQ(result.records.size(), 2u);
  EXPECT_EQ(result.report.input_images, 3u);
  EXPECT_EQ(result.report.retained_images, 2u);
  EXPECT_EQ(result.report.dropped_ids, std::vector<std::string>{"all-excluded"});
  EXPECT_EQ(serialize_label(result.records[0].label), "nxnnn");
  EXPECT_EQ(result.records[0].captions, std::vector<std::string>{"one-vice"});
  EXPECT_EQ(serialize_label(result.records[1].label), "vxnnn");
  EXPECT_EQ(result.records[1].captions.size(), 2u);
  EXPECT_EQ(result.records[1].provenance, Provenance::Expert);
  const std::array<std::size_t, 5> per_foundation = {2, 1, 2, 3, 2};
  EXPECT_EQ(result.report.excluded_per_foundation, per_foundation);
  EXPECT_NE(result.report.to_csv().find("excluded_care,2"), std::string::npos);
  EXPECT_THROW(preprocess_smid({rows[1], rows[1]}), ValidationError);
}

TEST(Preprocess, CsvParsing) {
  const std::string csv =
      "image_id, care_x, care_y, fairness_x, fairness_y, ingroup_x, ingroup_y, authority_x, authority_y, purity_x, "
      "purity_y\n"
      "img1,1.5,3.5,3,1,3,1,3,1,3,1\n\n";
  const auto rows = parse_smid_csv(csv);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].image_id, "img1");
  EXPECT_DOUBLE_EQ(rows[0].ratings[0].valence, 1.5);
  EXPECT_DOUBLE_EQ(rows[0].ratings[0].relevance, 3.5);
  EXPECT_THROW(parse_smid_csv("id,x\n"), FormatError);
  EXPECT_THROW(parse_smid_csv(csv + "img2,1,2\n"), FormatError);
  EXPECT_THROW(parse_smid_csv(csv + "img2,a,3.5,3,1,3,1,3,1,3,1\n"), FormatError);
  EXPECT_THROW(parse_smid_csv(""), FormatError);
}

TEST(Split, HundredUniformRecords) {
  Manifest m;
  for (int i = 0; i < 100; ++i) m.push_back(record("r" + std::to_string(i), "vnnnn", Split::Unassigned));
  const auto out = stratified_split(m, {0.05, 0.05, 3});
  EXPECT_EQ(select_split(out, Split::Train).size(), 90u);
  EXPECT_EQ(select_split(out, Split::Val).size(), 5u);
  EXPECT_EQ(select_split(out, Split::Test).size(), 5u);
}

TEST(Split, PerStratumWithinOneSampleAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Manifest m;
    static const char* kPool[] = {"nnnnn", "vnnnn", "xnnnn", "vxnnn"};
    const Source sources[] = {Source::Smid, Source::Laion, Source::ImageNet};
    const std::size_t n = 50 + rng.below(400);
    for (std::size_t i = 0; i < n; ++i)
      m.push_back(record("r" + std::to_string(i), kPool[rng.below(4)], Split::Unassigned, sources[rng.below(3)]));
    const SplitOptions opts{0.07, 0.11, seed};
    const auto out = stratified_split(m, opts);
    EXPECT_EQ(out, stratified_split(m, opts));
    std::map<std::pair<int, int>, std::array<std::size_t, 4>> counts;
    for (const auto& r : out) {
      ASSERT_NE(r.split, Split::Unassigned);
      ++counts[{static_cast<int>(r.source), static_cast<int>(collapse_polarity(r.label))}][static_cast<int>(r.split)];
    }
    for (const auto& [key, c] : counts) {
      const double total = static_cast<double>(c[1] + c[2] + c[3]);
      EXPECT_LE(std::abs(static_cast<double>(c[2]) - total * 0.07), 1.0);
      EXPECT_LE(std::abs(static_cast<double>(c[3]) - total * 0.11), 1.0);
    }
  }
  EXPECT_THROW(stratified_split({}, {}), ValidationError);
  EXPECT_THROW(stratified_split(mixed_corpus(5, 1), {0.6, 0.5, 0}), ValidationError);
}

TEST(Augment, ReplicasRotateCaptions) {
  auto single = record("a", "vnnnn");
  auto many = record("b", "xnnnn");
  many.captions.clear();
  for (int i = 0; i < 10; ++i) many.captions.push_back("c" + std::to_string(i));
  const auto held = record("c", "vnnnn", Split::Test);
  const auto out = augment_replicate({single, many, held}, 4, 11);
  ASSERT_EQ(out.size(), 1u + 4u + 1u + 4u + 1u);
  for (int k = 1; k <= 4; ++k) {
    EXPECT_EQ(out[static_cast<std::size_t>(k)].caption(), "cap-a");
    EXPECT_EQ(out[static_cast<std::size_t>(k)].id, "a#aug" + std::to_string(k));
  }
  // Replicas of "b" lead with consecutive captions starting at the seeded offset.
  std::set<std::string> leads;
  const std::size_t off = std::stoul(out[6].caption().substr(1));
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& rep = out[6 + k];
    EXPECT_EQ(rep.caption(), "c" + std::to_string((off + k) % 10));
    EXPECT_EQ(rep.label, many.label);
    EXPECT_EQ(rep.image_feature_id, many.image_feature_id);
    leads.insert(rep.caption());
  }
  EXPECT_EQ(leads.size(), 4u);
  EXPECT_EQ(out.back(), held);
  EXPECT_THROW(augment_replicate({single}, 0, 1), ValidationError);
}

TEST(Augment, TrainLabelMultisetScales) {
  const auto m = mixed_corpus(60, 2);
  const auto out = augment_replicate(m, 4, 3);
  std::multiset<std::string> expected;
  for (const auto& l : train_labels(m))
    for (int k = 0; k < 5; ++k) expected.insert(l);
  EXPECT_EQ(train_labels(out), expected);
}

TEST(Swap, NoOpAtZeroFraction) {
  const auto m = mixed_corpus(30, 4);
  auto cfg = SwapConfig::mild(1);
  cfg.mix_fraction = 0.0;
  EXPECT_EQ(mft_swap(m, cfg).records, m);
}

TEST(Swap, PreservesLabelsAndPermutesWithinGroups) {
  for (auto cfg : {SwapConfig::mild(5), SwapConfig::strong(5)}) {
    auto m = mixed_corpus(200, 6);
    m.push_back(record("lonely", "vxvxv"));
    const auto result = mft_swap(m, cfg);
    EXPECT_EQ(result.requested_targets, 150u);
    ASSERT_EQ(result.records.size(), m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_EQ(result.records[i].id, m[i].id);
      EXPECT_EQ(result.records[i].label, m[i].label);
    }
    EXPECT_EQ(contents(result.records), contents(m));
    EXPECT_NE(result.records, m);
    std::map<std::string, std::string> label_of;
    for (const auto& r : m) label_of[r.id] = serialize_label(r.label);
    for (const auto& s : result.swaps) {
      EXPECT_NE(s.target_id, s.partner_id);
      EXPECT_EQ(label_of[s.target_id], label_of[s.partner_id]);
    }
    EXPECT_EQ(result.swaps.size() + result.skipped_singletons.size(), result.requested_targets);
    for (const auto& id : result.skipped_singletons) EXPECT_EQ(id, "lonely");
    EXPECT_EQ(mft_swap(m, cfg).records, result.records);
  }
}

TEST(Swap, MildCapOnSingleLargeGroup) {
  Manifest m;
  m.reserve(10000);
  for (int i = 0; i < 10000; ++i) m.push_back(record("r" + std::to_string(i), "vnnnn"));
  const auto mild = mft_swap(m, SwapConfig::mild(7));
  EXPECT_EQ(mild.requested_targets, 7500u);
  EXPECT_EQ(mild.swaps_per_group.at("vnnnn"), 500u);
  EXPECT_EQ(mild.swaps.size(), 500u);
  EXPECT_EQ(train_labels(mild.records), train_labels(m));
  const auto strong = mft_swap(m, SwapConfig::strong(7));
  EXPECT_EQ(strong.swaps.size(), 7500u);
  EXPECT_THROW(mft_swap(m, {SwapMode::Mild, 1.5, 500, 0}), ValidationError);
}

TEST(Swap, MildSamplesGroupsUniformly) {
  // One large and one small group: mild draws about half of the targets from each
  // group until the small one runs out; strong follows group sizes.
  Manifest m;
  for (int i = 0; i < 900; ++i) m.push_back(record("a" + std::to_string(i), "vnnnn"));
  for (int i = 0; i < 100; ++i) m.push_back(record("b" + std::to_string(i), "xnnnn"));
  auto small_share = [](const SwapResult& r) {
    return static_cast<double>(r.swaps_per_group.count("xnnnn") ? r.swaps_per_group.at("xnnnn") : 0);
  };
  SwapConfig mild{SwapMode::Mild, 0.1, 500, 3};
  SwapConfig strong{SwapMode::Strong, 0.1, std::nullopt, 3};
  EXPECT_NEAR(small_share(mft_swap(m, mild)), 50.0, 15.0);
  EXPECT_NEAR(small_share(mft_swap(m, strong)), 10.0, 8.0);
}

TEST(Manifest, JsonRoundTrip) {
  auto m = mixed_corpus(5, 9);
  m[0].captions.push_back("second, with \"quotes\"");
  m[1].split = Split::Val;
  m[2].source = Source::Laion;
  m[3].provenance = Provenance::Compass;
  const auto text = format_manifest(m);
  EXPECT_EQ(parse_manifest(text), m);
  test::TempDir dir;
  write_manifest(m, dir.path / "m.jsonl");
  EXPECT_EQ(read_manifest(dir.path / "m.jsonl"), m);
  EXPECT_THROW(parse_manifest("{\"id\":1}\n"), Error);
}
