#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moralclip/labels.hpp"
#include "moralclip/manifest.hpp"

namespace moralclip {

// --- rating preprocessing ---

inline constexpr double kViceValenceBelow = 2.5;
inline constexpr double kVirtueValenceAbove = 3.5;
inline constexpr double kLowRelevanceBelow = 2.15;
inline constexpr double kHighRelevanceAbove = 2.84;

enum class FoundationOutcome { Vice, Virtue, Neither, Excluded };
std::string_view to_string(FoundationOutcome o);

/// Valence selects the candidate class (Vice < 2.5 < Neither < 3.5 < Virtue);
/// relevance confirms it: Vice/Virtue need relevance > 2.84, Neither needs
/// relevance < 2.15. Anything else is Excluded. Throws ValidationError on non-finite input.
FoundationOutcome classify_foundation(double valence, double relevance);

struct FoundationRating {
  double valence = 0.0;    // moral mean, "x"
  double relevance = 0.0;  // relevance mean, "y"
};

struct SmidRatingRow {
  std::string image_id;
  std::array<FoundationRating, kFoundationCount> ratings{};
};

/// Header: image_id, care_x, care_y, fairness_x, fairness_y, ingroup_x, ingroup_y,
/// authority_x, authority_y, purity_x, purity_y (whitespace around fields ignored).
std::vector<SmidRatingRow> parse_smid_csv(std::string_view text);

struct ExclusionReport {
  std::size_t input_images = 0;
  std::size_t retained_images = 0;
  std::vector<std::string> dropped_ids;
  std::array<std::size_t, kFoundationCount> excluded_per_foundation{};
  std::string to_csv() const;
};

struct PreprocessResult {
  Manifest records;
  ExclusionReport report;
};

/// Keeps an image iff fewer than five of its foundations are Excluded; Excluded
/// foundations of a kept image are labeled Neither. `captions` maps image id to
/// captions; images without an entry get their id as the single caption.
/// Throws ValidationError on duplicate image ids.
PreprocessResult preprocess_smid(const std::vector<SmidRatingRow>& rows,
                                 const std::map<std::string, std::vector<std::string>>& captions = {});

// --- splits ---

struct SplitOptions {
  double val_fraction = 0.05;
  double test_fraction = 0.05;
  std::uint64_t seed = 0;
};

/// Assigns train/val/test within each (source, polarity class) stratum; each
/// stratum's val and test counts are round(n * fraction). Throws on empty input.
Manifest stratified_split(const Manifest& records, const SplitOptions& options);

// --- dataset variants ---

/// Each train record gains `copies` replicas with id "<id>#aug<k>"; replica k
/// leads with caption (offset + k - 1) mod |captions| for a seeded per-record
/// offset. Val/test records are copied unchanged.
Manifest augment_replicate(const Manifest& records, std::size_t copies, std::uint64_t seed);

enum class SwapMode { Mild, Strong };
enum class SwapKind { Image, Text };

struct SwapConfig {
  SwapMode mode = SwapMode::Mild;
  double mix_fraction = 0.75;
  /// Maximum swaps per label group; nullopt for no cap.
  std::optional<std::size_t> per_group_cap = 500;
  std::uint64_t seed = 0;

  static SwapConfig mild(std::uint64_t seed) { return {SwapMode::Mild, 0.75, 500, seed}; }
  static SwapConfig strong(std::uint64_t seed) { return {SwapMode::Strong, 0.75, std::nullopt, seed}; }
};

struct SwapEvent {
  std::string target_id;
  std::string partner_id;
  SwapKind kind;
};

struct SwapResult {
  Manifest records;
  std::size_t requested_targets = 0;
  std::vector<SwapEvent> swaps;
  /// Targets whose label group has a single member.
  std::vector<std::string> skipped_singletons;
  /// Swaps performed per label group (canonical label encoding).
  std::map<std::string, std::size_t> swaps_per_group;
  std::string to_csv() const;
};

/// Exchanges the image feature reference or the caption list (seeded coin flip)
/// between a train record and another train record with the identical label.
/// floor(mix_fraction * |train|) records are drawn as targets: Strong draws them
/// uniformly over records (groups proportional to size); Mild picks a group
/// uniformly among those below the cap, then a member. Labels never change.
SwapResult mft_swap(const Manifest& records, const SwapConfig& config);

}  // namespace moralclip
