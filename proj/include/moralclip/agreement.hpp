#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moralclip/labels.hpp"

namespace moralclip {

/// Rating words used by the annotation service: "virtue", "neutral", "vice".
std::string_view rating_word(Polarity p);
/// Throws ValidationError naming `field` for anything else.
Polarity parse_rating_word(std::string_view word, std::string_view field);

/// Per-foundation categorical ratings indexed by (annotator, image); cells may be missing.
class RatingsTable {
 public:
  /// Inserts or replaces the ratings of one annotator for one image.
  void set(const std::string& annotator, const std::string& image, const MoralLabelVector& ratings);
  void set(const std::string& annotator, const std::string& image, Foundation f, Polarity rating);
  void erase_annotator(const std::string& annotator);

  /// Sorted.
  std::vector<std::string> annotators() const;
  std::vector<std::string> images() const;
  std::size_t rating_count() const;
  bool empty() const { return cells_.empty(); }

  std::optional<Polarity> get(const std::string& annotator, const std::string& image, Foundation f) const;

  /// Ratings of each image for one foundation, images in sorted order, annotators in sorted order.
  std::vector<std::vector<Polarity>> item_ratings(Foundation f) const;

  /// Every rating an annotator gave, all foundations pooled.
  std::vector<Polarity> annotator_ratings(const std::string& annotator) const;

 private:
  using Key = std::pair<std::string, std::string>;  // (image, annotator)
  std::map<Key, std::array<std::optional<Polarity>, kFoundationCount>> cells_;
};

/// Parses the service export: {"ratings": [{"annotator_id", "image_id", "ratings": {"care": "virtue", ...}}, ...]}.
RatingsTable ratings_from_export_json(std::string_view json_text);

/// Nominal Krippendorff alpha from the coincidence matrix. Items with fewer than
/// two ratings are not pairable and are ignored. Throws UndefinedMetricError when
/// nothing is pairable or only one category occurs.
double krippendorff_alpha(std::span<const std::vector<Polarity>> items);

/// Strict plurality; nullopt (no consensus) on a tie for first place or no ratings.
std::optional<Polarity> majority_vote(std::span<const Polarity> ratings);

/// (p_o - p_e) / (1 - p_e) over the three categories. Throws ValidationError on
/// length mismatch or fewer than 2 items, UndefinedMetricError when p_e == 1.
double cohen_kappa(std::span<const Polarity> a, std::span<const Polarity> b);

/// Kappa between model labels and majority labels over items that have a consensus.
double cohen_kappa_majority(std::span<const Polarity> model, std::span<const std::optional<Polarity>> majority);

/// Fraction of items whose majority vote exists. Throws UndefinedMetricError on zero items.
double consensus_coverage(std::span<const std::vector<Polarity>> items);

inline constexpr double kDefaultMinResponseStd = 0.05;

/// Numeric coding used for screening: Vice -1, Neither 0, Virtue +1.
double numeric_code(Polarity p);

struct AnnotatorStat {
  std::string annotator;
  std::size_t responses = 0;
  double std_dev = 0.0;  // population standard deviation of the coded responses
};

struct ScreeningResult {
  std::vector<std::string> retained;
  std::vector<AnnotatorStat> excluded;
  std::vector<AnnotatorStat> all;
  std::string to_csv() const;
};

ScreeningResult screen_annotators(const RatingsTable& table, double min_std = kDefaultMinResponseStd);

struct FoundationAgreement {
  Foundation foundation = Foundation::Care;
  std::size_t items = 0;
  std::size_t consensus_items = 0;
  std::optional<double> alpha;
  std::optional<double> alpha_se;
  std::optional<double> kappa_majority;
  std::optional<double> kappa_se;
  double consensus_coverage = 0.0;
};

struct AgreementReport {
  std::array<FoundationAgreement, kFoundationCount> foundations{};
  std::string to_csv() const;
};

struct AgreementOptions {
  std::size_t bootstrap_samples = 1000;
  std::uint64_t seed = 0;
};

/// Alpha, coverage and (when model labels are given, keyed by image id) kappa
/// against the majority per foundation. Undefined statistics are left empty.
AgreementReport agreement_report(const RatingsTable& table, const std::map<std::string, MoralLabelVector>* model_labels,
                                 const AgreementOptions& options = {});

}  // namespace moralclip
