#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace moralclip {

// The five moral foundations. Declaration order is the canonical
// serialization order and must not change.
enum class Foundation : std::uint8_t { Care = 0, Fairness, InGroup, Authority, Purity };

inline constexpr std::size_t kFoundationCount = 5;
inline constexpr std::array<Foundation, kFoundationCount> kAllFoundations = {
    Foundation::Care, Foundation::Fairness, Foundation::InGroup, Foundation::Authority, Foundation::Purity};

enum class Polarity : std::uint8_t { Neither = 0, Virtue, Vice };

/// Collapsed three-way (plus Mixed) view of a label vector.
enum class PolarityClass : std::uint8_t { Neutral = 0, Virtue, Vice, Mixed };

std::string_view to_string(Foundation f);
std::string_view to_string(Polarity p);
std::string_view to_string(PolarityClass c);

/// Lower-case machine name used in CSV headers and JSON keys ("care", "ingroup", ...).
std::string_view key_name(Foundation f);

PolarityClass parse_polarity_class(std::string_view s);

struct ActiveEntry {
  Foundation foundation;
  Polarity polarity;
  friend auto operator<=>(const ActiveEntry&, const ActiveEntry&) = default;
};

/// Sorted by foundation; never contains Polarity::Neither; at most one entry per foundation.
using ActiveSet = std::vector<ActiveEntry>;

/// Ternary polarity for each of the five foundations. Default is all-Neither.
class MoralLabelVector {
 public:
  constexpr MoralLabelVector() = default;

  Polarity operator[](Foundation f) const { return slots_[static_cast<std::size_t>(f)]; }
  void set(Foundation f, Polarity p) { slots_[static_cast<std::size_t>(f)] = p; }

  bool is_neutral() const;

  /// Index in [0, 243): base-3 digits, Care most significant, Neither=0, Virtue=1, Vice=2.
  std::uint16_t code() const;
  static MoralLabelVector from_code(std::uint16_t code);

  friend bool operator==(const MoralLabelVector&, const MoralLabelVector&) = default;

 private:
  std::array<Polarity, kFoundationCount> slots_{};
};

inline constexpr std::uint16_t kLabelVectorCount = 243;

/// Parses the canonical 5-character encoding over {v, x, n}.
/// Throws FormatError naming the offending position.
MoralLabelVector parse_label(std::string_view encoded);
std::string serialize_label(const MoralLabelVector& label);

ActiveSet active_set(const MoralLabelVector& label);

/// Scaled Jaccard index 2|A∩B|/|A∪B| - 1 over active sets; +1 when both are empty.
double moral_similarity(const MoralLabelVector& a, const MoralLabelVector& b);

/// True iff the active sets intersect, or both are empty (shared neutral pseudo-label).
bool shares_label(const MoralLabelVector& a, const MoralLabelVector& b);

PolarityClass collapse_polarity(const MoralLabelVector& label);

}  // namespace moralclip
