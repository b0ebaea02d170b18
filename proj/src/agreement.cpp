#include "moralclip/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "moralclip/errors.hpp"
#include "moralclip/evaluation.hpp"
#include "moralclip/text.hpp"

namespace moralclip {

std::string_view rating_word(Polarity p) {
  switch (p) {
    case Polarity::Virtue: return "virtue";
    case Polarity::Vice: return "vice";
    case Polarity::Neither: return "neutral";
  }
  return "?";
}

Polarity parse_rating_word(std::string_view word, std::string_view field) {
  if (word == "virtue") return Polarity::Virtue;
  if (word == "vice") return Polarity::Vice;
  if (word == "neutral") return Polarity::Neither;
  throw ValidationError(std::string(field) + ": '" + std::string(word) + "' is not one of virtue, neutral, vice");
}

void RatingsTable::set(const std::string& annotator, const std::string& image, const MoralLabelVector& ratings) {
  auto& cell = cells_[{image, annotator}];
  for (std::size_t f = 0; f < kFoundationCount; ++f) cell[f] = ratings[kAllFoundations[f]];
}

void RatingsTable::set(const std::string& annotator, const std::string& image, Foundation f, Polarity rating) {
  cells_[{image, annotator}][static_cast<std::size_t>(f)] = rating;
}

void RatingsTable::erase_annotator(const std::string& annotator) {
  std::erase_if(cells_, [&](const auto& kv) { return kv.first.second == annotator; });
}

std::vector<std::string> RatingsTable::annotators() const {
  std::set<std::string> s;
  for (const auto& [key, _] : cells_) s.insert(key.second);
  return {s.begin(), s.end()};
}

std::vector<std::string> RatingsTable::images() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : cells_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

std::size_t RatingsTable::rating_count() const {
  std::size_t n = 0;
  for (const auto& [_, cell] : cells_) {
    for (const auto& r : cell) n += r.has_value();
  }
  return n;
}

std::optional<Polarity> RatingsTable::get(const std::string& annotator, const std::string& image, Foundation f) const {
  auto it = cells_.find({image, annotator});
  if (it == cells_.end()) return std::nullopt;
  return it->second[static_cast<std::size_t>(f)];
}

std::vector<std::vector<Polarity>> RatingsTable::item_ratings(Foundation f) const {
  std::vector<std::vector<Polarity>> out;
  const std::string* current = nullptr;
  for (const auto& [key, cell] : cells_) {
    if (!current || *current != key.first) {
      out.emplace_back();
      current = &key.first;
    }
    if (auto r = cell[static_cast<std::size_t>(f)]) out.back().push_back(*r);
  }
  return out;
}

std::vector<Polarity> RatingsTable::annotator_ratings(const std::string& annotator) const {
  std::vector<Polarity> out;
  for (const auto& [key, cell] : cells_) {
    if (key.second != annotator) continue;
    for (const auto& r : cell) {
      if (r) out.push_back(*r);
    }
  }
  return out;
}

RatingsTable ratings_from_export_json(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("ratings export is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("ratings") || !doc["ratings"].is_array()) {
    throw FormatError("ratings export must be an object with a 'ratings' array");
  }
  RatingsTable table;
  std::size_t idx = 0;
  for (const auto& row : doc["ratings"]) {
    const std::string where = "ratings[" + std::to_string(idx++) + "]";
    if (!row.is_object() || !row.contains("annotator_id") || !row["annotator_id"].is_string() ||
        !row.contains("image_id") || !row["image_id"].is_string() || !row.contains("ratings") ||
        !row["ratings"].is_object()) {
      throw FormatError(where + " needs string annotator_id, string image_id and a ratings object");
    }
    const std::string annotator = row["annotator_id"];
    const std::string image = row["image_id"];
    for (Foundation f : kAllFoundations) {
      const auto key = std::string(key_name(f));
      if (!row["ratings"].contains(key)) continue;
      const auto& v = row["ratings"][key];
      if (!v.is_string()) throw FormatError(where + ".ratings." + key + " must be a string");
      table.set(annotator, image, f, parse_rating_word(v.get<std::string>(), where + ".ratings." + key));
    }
  }
  return table;
}

double krippendorff_alpha(std::span<const std::vector<Polarity>> items) {
  std::array<std::array<double, 3>, 3> o{};
  for (const auto& item : items) {
    const std::size_t m = item.size();
    if (m < 2) continue;
    const double w = 1.0 / static_cast<double>(m - 1);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        if (a != b) o[static_cast<std::size_t>(item[a])][static_cast<std::size_t>(item[b])] += w;
      }
    }
  }
  std::array<double, 3> nc{};
  double n = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < 3; ++k) nc[c] += o[c][k];
    n += nc[c];
  }
  if (n <= 1.0) throw UndefinedMetricError("alpha undefined: no pairable ratings");
  double disagree_observed = 0.0, disagree_expected = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (c == k) continue;
      disagree_observed += o[c][k];
      disagree_expected += nc[c] * nc[k];
    }
  }
  if (disagree_expected == 0.0) throw UndefinedMetricError("alpha undefined: only one category was used");
  return 1.0 - (n - 1.0) * disagree_observed / disagree_expected;
}

std::optional<Polarity> majority_vote(std::span<const Polarity> ratings) {
  std::array<std::size_t, 3> counts{};
  for (Polarity p : ratings) ++counts[static_cast<std::size_t>(p)];
  const std::size_t top = *std::max_element(counts.begin(), counts.end());
  if (top == 0 || std::count(counts.begin(), counts.end(), top) > 1) return std::nullopt;
  return static_cast<Polarity>(std::find(counts.begin(), counts.end(), top) - counts.begin());
}

double cohen_kappa(std::span<const Polarity> a, std::span<const Polarity> b) {
  if (a.size() != b.size()) throw ValidationError("kappa needs two label sequences of equal length");
  if (a.size() < 2) throw ValidationError("kappa needs at least 2 items");
  std::array<double, 3> ma{}, mb{};
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma[static_cast<std::size_t>(a[i])] += 1.0;
    mb[static_cast<std::size_t>(b[i])] += 1.0;
    agree += a[i] == b[i];
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < 3; ++c) pe += (ma[c] / n) * (mb[c] / n);
  if (pe >= 1.0) {
    throw UndefinedMetricError("kappa undefined: both sequences use the single category '" +
                               std::string(rating_word(a[0])) + "', so chance agreement is 1");
  }
  return (po - pe) / (1.0 - pe);
}

double cohen_kappa_majority(std::span<const Polarity> model, std::span<const std::optional<Polarity>> majority) {
  if (model.size() != majority.size()) throw ValidationError("model and majority label counts differ");
  std::vector<Polarity> a, b;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (majority[i]) {
      a.push_back(model[i]);
      b.push_back(*majority[i]);
    }
  }
  if (a.size() < 2) throw UndefinedMetricError("kappa undefined: fewer than 2 items have a majority label");
  return cohen_kappa(a, b);
}

double consensus_coverage(std::span<const std::vector<Polarity>> items) {
  if (items.empty()) throw UndefinedMetricError("consensus coverage undefined: no items");
  std::size_t covered = 0;
  for (const auto& item : items) covered += majority_vote(item).has_value();
  return static_cast<double>(covered) / static_cast<double>(items.size());
}

double numeric_code(Polarity p) {
  switch (p) {
    case Polarity::Vice: return -1.0;
    case Polarity::Neither: return 0.0;
    case Polarity::Virtue: return 1.0;
  }
  return 0.0;
}

ScreeningResult screen_annotators(const RatingsTable& table, double min_std) {
  if (!(min_std >= 0.0)) throw ValidationError("min_std must be non-negative");
  ScreeningResult out;
  for (const auto& annotator : table.annotators()) {
    const auto responses = table.annotator_ratings(annotator);
    AnnotatorStat stat{annotator, responses.size(), 0.0};
    if (!responses.empty()) {
      double mean = 0.0;
      for (Polarity p : responses) mean += numeric_code(p);
      mean /= static_cast<double>(responses.size());
      double ss = 0.0;
      for (Polarity p : responses) ss += (numeric_code(p) - mean) * (numeric_code(p) - mean);
      stat.std_dev = std::sqrt(ss / static_cast<double>(responses.size()));
    }
    out.all.push_back(stat);
    if (stat.std_dev < min_std) {
      out.excluded.push_back(stat);
    } else {
      out.retained.push_back(annotator);
    }
  }
  return out;
}

std::string ScreeningResult::to_csv() const {
  std::string out = "annotator,responses,std,excluded\n";
  for (const auto& s : all) {
    const bool ex = std::any_of(excluded.begin(), excluded.end(), [&](const auto& e) { return e.annotator == s.annotator; });
    out += s.annotator + "," + std::to_string(s.responses) + "," + format_real(s.std_dev) + "," + (ex ? "1" : "0") + "\n";
  }
  return out;
}

std::string AgreementReport::to_csv() const {
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  std::string out = "foundation,items,alpha,alpha_se,kappa_majority,kappa_se,consensus_coverage,consensus_items\n";
  for (const auto& f : foundations) {
    out += std::string(key_name(f.foundation)) + "," + std::to_string(f.items) + "," + opt(f.alpha) + "," +
           opt(f.alpha_se) + "," + opt(f.kappa_majority) + "," + opt(f.kappa_se) + "," +
           format_real(f.consensus_coverage) + "," + std::to_string(f.consensus_items) + "\n";
  }
  return out;
}

AgreementReport agreement_report(const RatingsTable& table, const std::map<std::string, MoralLabelVector>* model_labels,
                                 const AgreementOptions& options) {
  AgreementReport report;
  const auto images = table.images();
  for (std::size_t fi = 0; fi < kFoundationCount; ++fi) {
    const Foundation f = kAllFoundations[fi];
    FoundationAgreement& out = report.foundations[fi];
    out.foundation = f;
    const auto items = table.item_ratings(f);
    out.items = items.size();
    if (items.empty()) continue;

    std::vector<std::optional<Polarity>> majority;
    for (const auto& item : items) majority.push_back(majority_vote(item));
    out.consensus_items = static_cast<std::size_t>(std::count_if(majority.begin(), majority.end(), [](auto& m) { return m.has_value(); }));
    out.consensus_coverage = static_cast<double>(out.consensus_items) / static_cast<double>(items.size());

    auto alpha_fn = [&items](std::span<const std::size_t> idx) {
      std::vector<std::vector<Polarity>> sample;
      sample.reserve(idx.size());
      for (std::size_t i : idx) sample.push_back(items[i]);
      return krippendorff_alpha(sample);
    };
    try {
      std::vector<std::size_t> all(items.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      out.alpha = alpha_fn(all);
      const auto r = bootstrap("alpha", items.size(), alpha_fn, options.bootstrap_samples, options.seed + fi);
      out.alpha_se = r.standard_error;
    } catch (const UndefinedMetricError&) {
      // leave the undefined parts empty
    }

    if (model_labels) {
      std::vector<Polarity> model, maj;
      for (std::size_t i = 0; i < images.size(); ++i) {
        auto it = model_labels->find(images[i]);
        if (it == model_labels->end()) throw ValidationError("no model label for image '" + images[i] + "'");
        if (!majority[i]) continue;
        model.push_back(it->second[f]);
        maj.push_back(*majority[i]);
      }
      auto kappa_fn = [&](std::span<const std::size_t> idx) {
        std::vector<Polarity> a, b;
        for (std::size_t i : idx) {
          a.push_back(model[i]);
          b.push_back(maj[i]);
        }
        if (a.size() < 2) throw UndefinedMetricError("kappa undefined: fewer than 2 items");
        return cohen_kappa(a, b);
      };
      try {
        if (model.size() < 2) throw UndefinedMetricError("kappa undefined: fewer than 2 consensus items");
        out.kappa_majority = cohen_kappa(model, maj);
        const auto r = bootstrap("kappa", model.size(), kappa_fn, options.bootstrap_samples, options.seed + 100 + fi);
        out.kappa_se = r.standard_error;
      } catch (const UndefinedMetricError&) {
      }
    }
  }
  return report;
}

}  // namespace moralclip
