#include "moralclip/labels.hpp"

#include "moralclip/errors.hpp"

namespace moralclip {

std::string_view to_string(Foundation f) {
  switch (f) {
    case Foundation::Care: return "Care";
    case Foundation::Fairness: return "Fairness";
    case Foundation::InGroup: return "InGroup";
    case Foundation::Authority: return "Authority";
    case Foundation::Purity: return "Purity";
  }
  return "?";
}

std::string_view key_name(Foundation f) {
  switch (f) {
    case Foundation::Care: return "care";
    case Foundation::Fairness: return "fairness";
    case Foundation::InGroup: return "ingroup";
    case Foundation::Authority: return "authority";
    case Foundation::Purity: return "purity";
  }
  return "?";
}

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::Neither: return "Neither";
    case Polarity::Virtue: return "Virtue";
    case Polarity::Vice: return "Vice";
  }
  return "?";
}

std::string_view to_string(PolarityClass c) {
  switch (c) {
    case PolarityClass::Neutral: return "Neutral";
    case PolarityClass::Virtue: return "Virtue";
    case PolarityClass::Vice: return "Vice";
    case PolarityClass::Mixed: return "Mixed";
  }
  return "?";
}

PolarityClass parse_polarity_class(std::string_view s) {
  if (s == "Neutral" || s == "neutral") return PolarityClass::Neutral;
  if (s == "Virtue" || s == "virtue") return PolarityClass::Virtue;
  if (s == "Vice" || s == "vice") return PolarityClass::Vice;
  if (s == "Mixed" || s == "mixed") return PolarityClass::Mixed;
  throw FormatError("unknown polarity class '" + std::string(s) + "'");
}

bool MoralLabelVector::is_neutral() const {
  for (Polarity p : slots_) {
    if (p != Polarity::Neither) return false;
  }
  return true;
}

std::uint16_t MoralLabelVector::code() const {
  std::uint16_t c = 0;
  for (Polarity p : slots_) c = static_cast<std::uint16_t>(c * 3 + static_cast<std::uint16_t>(p));
  return c;
}

MoralLabelVector MoralLabelVector::from_code(std::uint16_t code) {
  if (code >= kLabelVectorCount) throw ValidationError("label code out of range: " + std::to_string(code));
  MoralLabelVector out;
  for (std::size_t i = kFoundationCount; i-- > 0;) {
    out.slots_[i] = static_cast<Polarity>(code % 3);
    code /= 3;
  }
  return out;
}

MoralLabelVector parse_label(std::string_view encoded) {
  if (encoded.size() != kFoundationCount) {
    throw FormatError("label '" + std::string(encoded) + "' must have exactly 5 characters, got " +
                      std::to_string(encoded.size()));
  }
  MoralLabelVector out;
  for (std::size_t i = 0; i < kFoundationCount; ++i) {
    Polarity p;
    switch (encoded[i]) {
      case 'v': p = Polarity::Virtue; break;
      case 'x': p = Polarity::Vice; break;
      case 'n': p = Polarity::Neither; break;
      default:
        throw FormatError("label '" + std::string(encoded) + "' has invalid character '" +
                          std::string(1, encoded[i]) + "' at position " + std::to_string(i) +
                          " (" + std::string(to_string(kAllFoundations[i])) + "); expected one of v, x, n");
    }
    out.set(kAllFoundations[i], p);
  }
  return out;
}

std::string serialize_label(const MoralLabelVector& label) {
  std::string out(kFoundationCount, 'n');
  for (std::size_t i = 0; i < kFoundationCount; ++i) {
    switch (label[kAllFoundations[i]]) {
      case Polarity::Virtue: out[i] = 'v'; break;
      case Polarity::Vice: out[i] = 'x'; break;
      case Polarity::Neither: break;
    }
  }
  return out;
}

ActiveSet active_set(const MoralLabelVector& label) {
  ActiveSet out;
  for (Foundation f : kAllFoundations) {
    if (label[f] != Polarity::Neither) out.push_back({f, label[f]});
  }
  return out;
}

namespace {

struct Overlap {
  int intersection = 0;
  int union_size = 0;
};

// Two active entries can only coincide on the same foundation, so a single
// pass over the five slots counts both set sizes.
Overlap overlap(const MoralLabelVector& a, const MoralLabelVector& b) {
  Overlap o;
  for (Foundation f : kAllFoundations) {
    const Polarity pa = a[f];
    const Polarity pb = b[f];
    const bool in_a = pa != Polarity::Neither;
    const bool in_b = pb != Polarity::Neither;
    if (in_a && in_b && pa == pb) {
      ++o.intersection;
      ++o.union_size;
    } else {
      o.union_size += static_cast<int>(in_a) + static_cast<int>(in_b);
    }
  }
  return o;
}

}  // namespace

double moral_similarity(const MoralLabelVector& a, const MoralLabelVector& b) {
  const Overlap o = overlap(a, b);
  if (o.union_size == 0) return 1.0;
  return 2.0 * static_cast<double>(o.intersection) / static_cast<double>(o.union_size) - 1.0;
}

bool shares_label(const MoralLabelVector& a, const MoralLabelVector& b) {
  const Overlap o = overlap(a, b);
  return o.union_size == 0 || o.intersection > 0;
}

PolarityClass collapse_polarity(const MoralLabelVector& label) {
  bool virtue = false;
  bool vice = false;
  for (Foundation f : kAllFoundations) {
    virtue |= label[f] == Polarity::Virtue;
    vice |= label[f] == Polarity::Vice;
  }
  if (virtue && vice) return PolarityClass::Mixed;
  if (virtue) return PolarityClass::Virtue;
  if (vice) return PolarityClass::Vice;
  return PolarityClass::Neutral;
}

}  // namespace moralclip
