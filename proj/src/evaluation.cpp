#include "moralclip/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "moralclip/rng.hpp"

namespace moralclip {

LabeledEmbeddings LabeledEmbeddings::subset(std::span<const std::size_t> rows) const {
  LabeledEmbeddings out;
  out.vectors = Matrix(rows.size(), vectors.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.ids.push_back(ids[rows[r]]);
    out.labels.push_back(labels[rows[r]]);
    std::copy_n(vectors.row(rows[r]).begin(), vectors.cols(), out.vectors.row(r).begin());
  }
  return out;
}

LabeledEmbeddings gather_embeddings(const Manifest& records, const FeatureBank& bank, Modality modality) {
  std::vector<std::size_t> rows;
  rows.reserve(records.size());
  LabeledEmbeddings out;
  for (const auto& r : records) {
    const std::string& key = modality == Modality::Image ? r.image_feature_id : r.caption();
    auto found = bank.find(key);
    if (!found) {
      throw ValidationError(std::string(modality == Modality::Image ? "image" : "text") + " feature '" + key +
                            "' for record '" + r.id + "' is missing from the bank");
    }
    rows.push_back(*found);
    out.ids.push_back(r.id);
    out.labels.push_back(r.label);
  }
  out.vectors = bank.gather(rows);
  return out;
}

namespace {

void check_nonempty(const LabeledEmbeddings& e, const char* what) {
  if (e.size() == 0) throw ValidationError(std::string(what) + " set is empty");
  if (e.labels.size() != e.size() || e.vectors.rows() != e.size()) {
    throw ValidationError(std::string(what) + " set has inconsistent ids/labels/vectors");
  }
}

Matrix self_cosine(const LabeledEmbeddings& bank) {
  const Matrix unit = normalize_rows(bank.vectors);
  return multiply_transposed(unit, unit);
}

double discriminative_power_on(const Matrix& cos, std::span<const MoralLabelVector> labels,
                               std::span<const std::size_t> idx) {
  double sum_share = 0.0, sum_other = 0.0;
  std::size_t n_share = 0, n_other = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const double c = cos(idx[a], idx[b]);
      if (shares_label(labels[idx[a]], labels[idx[b]])) {
        sum_share += c;
        ++n_share;
      } else {
        sum_other += c;
        ++n_other;
      }
    }
  }
  if (n_share == 0) throw UndefinedMetricError("discriminative power undefined: no label-sharing pairs");
  if (n_other == 0) throw UndefinedMetricError("discriminative power undefined: no non-sharing pairs");
  const double mean_other = sum_other / static_cast<double>(n_other);
  if (mean_other == 0.0) throw UndefinedMetricError("discriminative power undefined: non-sharing mean cosine is 0");
  return (sum_share / static_cast<double>(n_share)) / mean_other;
}

double silhouette_on(const Matrix& cos, std::span<const MoralLabelVector> labels, std::span<const std::size_t> idx) {
  // Positions grouped by collapsed class; Mixed is dropped.
  std::array<std::vector<std::size_t>, 3> members;
  for (std::size_t pos = 0; pos < idx.size(); ++pos) {
    const PolarityClass c = collapse_polarity(labels[idx[pos]]);
    if (c == PolarityClass::Mixed) continue;
    members[static_cast<std::size_t>(c)].push_back(pos);
  }
  std::size_t populated = 0;
  for (const auto& m : members) populated += m.empty() ? 0 : 1;
  if (populated < 2) throw UndefinedMetricError("silhouette undefined: fewer than 2 polarity classes present");

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t own = 0; own < members.size(); ++own) {
    for (std::size_t pos : members[own]) {
      ++count;
      if (members[own].size() == 1) continue;  // contributes 0
      const std::size_t i = idx[pos];
      double a = 0.0;
      for (std::size_t other : members[own]) {
        if (other != pos) a += 1.0 - cos(i, idx[other]);
      }
      a /= static_cast<double>(members[own].size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t cls = 0; cls < members.size(); ++cls) {
        if (cls == own || members[cls].empty()) continue;
        double d = 0.0;
        for (std::size_t other : members[cls]) d += 1.0 - cos(i, idx[other]);
        b = std::min(b, d / static_cast<double>(members[cls].size()));
      }
      const double denom = std::max(a, b);
      if (denom > 0.0) total += (b - a) / denom;
    }
  }
  return total / static_cast<double>(count);
}

std::vector<std::size_t> identity_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

std::vector<std::optional<double>> average_precisions(const LabeledEmbeddings& queries,
                                                      const LabeledEmbeddings& corpus, bool exclude_self) {
  check_nonempty(queries, "query");
  check_nonempty(corpus, "corpus");
  if (queries.vectors.cols() != corpus.vectors.cols()) throw ValidationError("query/corpus dimension mismatch");
  const Matrix qn = normalize_rows(queries.vectors);
  const Matrix cn = normalize_rows(corpus.vectors);

  std::vector<std::optional<double>> out(queries.size());
  struct Scored {
    double sim;
    std::size_t item;
  };
  std::vector<Scored> ranked;
  ranked.reserve(corpus.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    ranked.clear();
    for (std::size_t c = 0; c < corpus.size(); ++c) {
      if (exclude_self && corpus.ids[c] == queries.ids[q]) continue;
      ranked.push_back({dot(qn.row(q), cn.row(c)), c});
    }
    std::sort(ranked.begin(), ranked.end(), [&corpus](const Scored& a, const Scored& b) {
      if (a.sim != b.sim) return a.sim > b.sim;
      return corpus.ids[a.item] < corpus.ids[b.item];
    });
    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
      if (shares_label(queries.labels[q], corpus.labels[ranked[k].item])) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    }
    if (hits > 0) out[q] = precision_sum / static_cast<double>(hits);
  }
  return out;
}

MapResult mean_average_precision(const LabeledEmbeddings& queries, const LabeledEmbeddings& corpus,
                                 bool exclude_self) {
  const auto aps = average_precisions(queries, corpus, exclude_self);
  MapResult r;
  double sum = 0.0;
  for (const auto& ap : aps) {
    if (ap) {
      sum += *ap;
      ++r.queries_used;
    } else {
      ++r.queries_skipped;
    }
  }
  if (r.queries_used == 0) throw UndefinedMetricError("MAP undefined: no query has a relevant corpus item");
  r.value = sum / static_cast<double>(r.queries_used);
  return r;
}

double discriminative_power(const LabeledEmbeddings& bank) {
  check_nonempty(bank, "embedding");
  const Matrix cos = self_cosine(bank);
  const auto idx = identity_indices(bank.size());
  return discriminative_power_on(cos, bank.labels, idx);
}

double silhouette(const LabeledEmbeddings& bank) {
  check_nonempty(bank, "embedding");
  const Matrix cos = self_cosine(bank);
  const auto idx = identity_indices(bank.size());
  return silhouette_on(cos, bank.labels, idx);
}

MetricReport bootstrap(std::string metric, std::size_t n_items, const ResampledMetric& metric_fn, std::size_t n,
                       std::uint64_t seed) {
  if (n < 2) throw ValidationError("bootstrap needs at least 2 resamples");
  if (n_items == 0) throw ValidationError("bootstrap over an empty data set");
  MetricReport report;
  report.metric = std::move(metric);
  report.n_bootstrap = n;
  const auto all = identity_indices(n_items);
  report.value = metric_fn(all);

  Rng rng(seed);
  std::vector<std::size_t> sample(n_items);
  std::vector<double> values;
  values.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (auto& s : sample) s = static_cast<std::size_t>(rng.below(n_items));
    try {
      values.push_back(metric_fn(sample));
    } catch (const UndefinedMetricError&) {
      ++report.n_undefined;
    }
  }
  if (report.n_undefined * 10 > n) {
    throw InstabilityError(report.metric + " undefined on " + std::to_string(report.n_undefined) + " of " +
                           std::to_string(n) + " bootstrap resamples");
  }
  if (values.size() >= 2) {
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    report.standard_error = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return report;
}

MetricReport bootstrap_map(std::string metric, const LabeledEmbeddings& queries, const LabeledEmbeddings& corpus,
                           bool exclude_self, std::size_t n, std::uint64_t seed) {
  const auto aps = average_precisions(queries, corpus, exclude_self);
  auto fn = [&aps](std::span<const std::size_t> idx) {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i : idx) {
      if (aps[i]) {
        sum += *aps[i];
        ++used;
      }
    }
    if (used == 0) throw UndefinedMetricError("MAP undefined: no query has a relevant corpus item");
    return sum / static_cast<double>(used);
  };
  return bootstrap(std::move(metric), aps.size(), fn, n, seed);
}

MetricReport bootstrap_discriminative_power(std::string metric, const LabeledEmbeddings& bank, std::size_t n,
                                            std::uint64_t seed) {
  check_nonempty(bank, "embedding");
  const Matrix cos = self_cosine(bank);
  auto fn = [&](std::span<const std::size_t> idx) { return discriminative_power_on(cos, bank.labels, idx); };
  return bootstrap(std::move(metric), bank.size(), fn, n, seed);
}

MetricReport bootstrap_silhouette(std::string metric, const LabeledEmbeddings& bank, std::size_t n,
                                  std::uint64_t seed) {
  check_nonempty(bank, "embedding");
  const Matrix cos = self_cosine(bank);
  auto fn = [&](std::span<const std::size_t> idx) { return silhouette_on(cos, bank.labels, idx); };
  return bootstrap(std::move(metric), bank.size(), fn, n, seed);
}

std::string metric_reports_to_csv(std::span<const MetricReport> reports) {
  std::string out = "metric,value,se,n\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%zu\n", r.value, r.standard_error, r.n_bootstrap);
    out += r.metric;
    out += buf;
  }
  return out;
}

// --- retrieval ---

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::I2I: return "I2I";
    case Direction::T2T: return "T2T";
    case Direction::I2T: return "I2T";
    case Direction::T2I: return "T2I";
  }
  return "?";
}

Direction parse_direction(std::string_view s) {
  if (s == "I2I" || s == "i2i") return Direction::I2I;
  if (s == "T2T" || s == "t2t") return Direction::T2T;
  if (s == "I2T" || s == "i2t") return Direction::I2T;
  if (s == "T2I" || s == "t2i") return Direction::T2I;
  throw FormatError("unknown retrieval direction '" + std::string(s) + "'");
}

RetrievalResult rank_retrieve(const RetrievalCorpus& corpus, std::string_view query_id, Direction direction,
                              std::size_t k) {
  const bool query_is_image = direction == Direction::I2I || direction == Direction::I2T;
  const bool target_is_image = direction == Direction::I2I || direction == Direction::T2I;
  const LabeledEmbeddings& source = query_is_image ? corpus.images : corpus.texts;
  const LabeledEmbeddings& target = target_is_image ? corpus.images : corpus.texts;
  const bool unimodal = direction == Direction::I2I || direction == Direction::T2T;

  auto it = std::find(source.ids.begin(), source.ids.end(), query_id);
  if (it == source.ids.end()) throw ValidationError("unknown query id '" + std::string(query_id) + "'");
  const std::size_t q = static_cast<std::size_t>(it - source.ids.begin());

  const auto qv = normalize(source.vectors.row(q));
  const Matrix tn = normalize_rows(target.vectors);

  RetrievalResult result;
  result.query_id = std::string(query_id);
  result.direction = direction;
  result.query_label = source.labels[q];
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (unimodal && target.ids[c] == query_id) continue;
    result.items.push_back(
        {target.ids[c], dot(qv, tn.row(c)), shares_label(source.labels[q], target.labels[c]), target.labels[c]});
  }
  std::sort(result.items.begin(), result.items.end(), [](const RetrievedItem& a, const RetrievedItem& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.item_id < b.item_id;
  });
  if (result.items.size() > k) result.items.resize(k);
  return result;
}

std::string retrieval_to_json_line(const RetrievalResult& result) {
  nlohmann::json j;
  j["query_id"] = result.query_id;
  j["direction"] = to_string(result.direction);
  j["query_label"] = serialize_label(result.query_label);
  j["items"] = nlohmann::json::array();
  for (const auto& item : result.items) {
    j["items"].push_back({{"item_id", item.item_id},
                          {"similarity", item.similarity},
                          {"shares_label", item.shares_label},
                          {"label", serialize_label(item.label)}});
  }
  return j.dump();
}

}  // namespace moralclip
