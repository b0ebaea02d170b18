#include "moralclip/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>

#include "moralclip/errors.hpp"
#include "moralclip/rng.hpp"

namespace moralclip {

std::string_view to_string(FoundationOutcome o) {
  switch (o) {
    case FoundationOutcome::Vice: return "Vice";
    case FoundationOutcome::Virtue: return "Virtue";
    case FoundationOutcome::Neither: return "Neither";
    case FoundationOutcome::Excluded: return "Excluded";
  }
  return "?";
}

FoundationOutcome classify_foundation(double valence, double relevance) {
  if (!std::isfinite(valence) || !std::isfinite(relevance)) {
    throw ValidationError("rating values must be finite");
  }
  if (valence < kViceValenceBelow) {
    return relevance > kHighRelevanceAbove ? FoundationOutcome::Vice : FoundationOutcome::Excluded;
  }
  if (valence > kVirtueValenceAbove) {
    return relevance > kHighRelevanceAbove ? FoundationOutcome::Virtue : FoundationOutcome::Excluded;
  }
  return relevance < kLowRelevanceBelow ? FoundationOutcome::Neither : FoundationOutcome::Excluded;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
  std::string tmp(field);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": '" + tmp + "' is not a number");
  }
  return v;
}

}  // namespace

std::vector<SmidRatingRow> parse_smid_csv(std::string_view text) {
  static const std::array<std::string_view, 11> kHeader = {
      "image_id", "care_x",      "care_y",      "fairness_x", "fairness_y", "ingroup_x",
      "ingroup_y", "authority_x", "authority_y", "purity_x",   "purity_y"};
  std::vector<SmidRatingRow> rows;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (!header_seen) {
      if (fields.size() != kHeader.size() || !std::equal(fields.begin(), fields.end(), kHeader.begin())) {
        throw FormatError("ratings header must be: image_id, care_x, care_y, fairness_x, fairness_y, ingroup_x, "
                          "ingroup_y, authority_x, authority_y, purity_x, purity_y");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != kHeader.size()) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 11 fields, got " +
                        std::to_string(fields.size()));
    }
    SmidRatingRow row;
    row.image_id = std::string(fields[0]);
    if (row.image_id.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty image_id");
    for (std::size_t f = 0; f < kFoundationCount; ++f) {
      row.ratings[f].valence = parse_double(fields[1 + 2 * f], line_no);
      row.ratings[f].relevance = parse_double(fields[2 + 2 * f], line_no);
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw FormatError("ratings file is empty");
  return rows;
}

std::string ExclusionReport::to_csv() const {
  std::string out = "key,value\n";
  out += "input_images," + std::to_string(input_images) + "\n";
  out += "retained_images," + std::to_string(retained_images) + "\n";
  out += "dropped_images," + std::to_string(dropped_ids.size()) + "\n";
  for (std::size_t f = 0; f < kFoundationCount; ++f) {
    out += "excluded_" + std::string(key_name(kAllFoundations[f])) + "," +
           std::to_string(excluded_per_foundation[f]) + "\n";
  }
  return out;
}

PreprocessResult preprocess_smid(const std::vector<SmidRatingRow>& rows,
                                 const std::map<std::string, std::vector<std::string>>& captions) {
  PreprocessResult result;
  result.report.input_images = rows.size();
  std::set<std::string> seen;
  for (const auto& row : rows) {
    if (!seen.insert(row.image_id).second) throw ValidationError("duplicate image_id '" + row.image_id + "'");
    MoralLabelVector label;
    std::size_t excluded = 0;
    for (std::size_t f = 0; f < kFoundationCount; ++f) {
      const auto outcome = classify_foundation(row.ratings[f].valence, row.ratings[f].relevance);
      switch (outcome) {
        case FoundationOutcome::Vice: label.set(kAllFoundations[f], Polarity::Vice); break;
        case FoundationOutcome::Virtue: label.set(kAllFoundations[f], Polarity::Virtue); break;
        case FoundationOutcome::Neither: break;
        case FoundationOutcome::Excluded:
          ++excluded;
          ++result.report.excluded_per_foundation[f];
          break;
      }
    }
    if (excluded == kFoundationCount) {
      result.report.dropped_ids.push_back(row.image_id);
      continue;
    }
    SampleRecord rec;
    rec.id = row.image_id;
    rec.source = Source::Smid;
    rec.image_feature_id = row.image_id;
    auto it = captions.find(row.image_id);
    if (it != captions.end() && !it->second.empty()) {
      rec.captions = it->second;
    } else {
      rec.captions = {row.image_id};
    }
    rec.label = label;
    rec.provenance = Provenance::Expert;
    result.records.push_back(std::move(rec));
  }
  result.report.retained_images = result.records.size();
  return result;
}

Manifest stratified_split(const Manifest& records, const SplitOptions& options) {
  if (records.empty()) throw ValidationError("cannot split an empty manifest");
  const double v = options.val_fraction, t = options.test_fraction;
  if (!(v > 0.0 && v < 1.0) || !(t > 0.0 && t < 1.0) || !(v + t < 1.0)) {
    throw ValidationError("split fractions must lie in (0, 1) and sum to less than 1");
  }
  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i) {
    strata[{static_cast<int>(records[i].source), static_cast<int>(collapse_polarity(records[i].label))}].push_back(i);
  }
  Manifest out = records;
  Rng rng(options.seed);
  for (auto& [key, members] : strata) {
    rng.shuffle(std::span<std::size_t>(members));
    const double n = static_cast<double>(members.size());
    const auto n_val = static_cast<std::size_t>(std::floor(n * v + 0.5));
    const auto n_test = std::min(members.size() - n_val, static_cast<std::size_t>(std::floor(n * t + 0.5)));
    for (std::size_t k = 0; k < members.size(); ++k) {
      out[members[k]].split = k < n_val ? Split::Val : (k < n_val + n_test ? Split::Test : Split::Train);
    }
  }
  return out;
}

Manifest augment_replicate(const Manifest& records, std::size_t copies, std::uint64_t seed) {
  if (copies < 1) throw ValidationError("augmentation needs at least one copy");
  Rng rng(seed);
  Manifest out;
  out.reserve(records.size() * (1 + copies));
  for (const auto& rec : records) {
    out.push_back(rec);
    if (rec.split != Split::Train) continue;
    const std::size_t n = rec.captions.size();
    const std::size_t offset = static_cast<std::size_t>(rng.below(n));
    for (std::size_t k = 1; k <= copies; ++k) {
      SampleRecord replica = rec;
      replica.id = rec.id + "#aug" + std::to_string(k);
      std::rotate(replica.captions.begin(), replica.captions.begin() + static_cast<std::ptrdiff_t>((offset + k - 1) % n),
                  replica.captions.end());
      out.push_back(std::move(replica));
    }
  }
  return out;
}

std::string SwapResult::to_csv() const {
  std::string out = "target_id,partner_id,kind\n";
  for (const auto& s : swaps) {
    out += s.target_id + "," + s.partner_id + "," + (s.kind == SwapKind::Image ? "image" : "text") + "\n";
  }
  for (const auto& id : skipped_singletons) out += id + ",,skipped_singleton\n";
  return out;
}

SwapResult mft_swap(const Manifest& records, const SwapConfig& config) {
  if (!(config.mix_fraction >= 0.0 && config.mix_fraction <= 1.0)) {
    throw ValidationError("mix_fraction must lie in [0, 1]");
  }
  SwapResult result;
  result.records = records;
  Manifest& out = result.records;

  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].split == Split::Train) train.push_back(i);
  }
  result.requested_targets = static_cast<std::size_t>(std::floor(config.mix_fraction * static_cast<double>(train.size())));
  if (result.requested_targets == 0) return result;

  // Label groups in canonical-code order for determinism.
  std::map<std::uint16_t, std::vector<std::size_t>> groups;
  for (std::size_t i : train) groups[out[i].label.code()].push_back(i);

  Rng rng(config.seed);
  auto perform = [&](std::size_t target, const std::vector<std::size_t>& group) {
    const std::string key = serialize_label(out[target].label);
    if (group.size() < 2) {
      result.skipped_singletons.push_back(out[target].id);
      return;
    }
    std::size_t partner = target;
    while (partner == target) partner = group[rng.below(group.size())];
    const SwapKind kind = rng.coin() ? SwapKind::Image : SwapKind::Text;
    if (kind == SwapKind::Image) {
      std::swap(out[target].image_feature_id, out[partner].image_feature_id);
    } else {
      std::swap(out[target].captions, out[partner].captions);
    }
    result.swaps.push_back({out[target].id, out[partner].id, kind});
    ++result.swaps_per_group[key];
  };
  auto at_cap = [&](std::uint16_t code) {
    if (!config.per_group_cap) return false;
    auto it = result.swaps_per_group.find(serialize_label(MoralLabelVector::from_code(code)));
    return it != result.swaps_per_group.end() && it->second >= *config.per_group_cap;
  };

  if (config.mode == SwapMode::Strong) {
    std::vector<std::size_t> order = train;
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t k = 0; k < result.requested_targets; ++k) {
      const std::size_t target = order[k];
      const std::uint16_t code = out[target].label.code();
      if (at_cap(code)) continue;
      perform(target, groups[code]);
    }
    return result;
  }

  // Mild: uniform over groups that still have capacity and unselected members.
  std::map<std::uint16_t, std::vector<std::size_t>> remaining = groups;
  std::size_t selected = 0;
  while (selected < result.requested_targets) {
    std::vector<std::uint16_t> eligible;
    for (const auto& [code, members] : remaining) {
      if (!members.empty() && !at_cap(code)) eligible.push_back(code);
    }
    if (eligible.empty()) break;
    const std::uint16_t code = eligible[rng.below(eligible.size())];
    auto& pool = remaining[code];
    const std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
    const std::size_t target = pool[pick];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    ++selected;
    perform(target, groups[code]);
  }
  return result;
}

}  // namespace moralclip
