#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moralclip/errors.hpp"
#include "moralclip/features.hpp"
#include "moralclip/labels.hpp"
#include "moralclip/manifest.hpp"
#include "moralclip/matrix.hpp"

namespace moralclip {

/// Embeddings with a sample id and moral label per row.
struct LabeledEmbeddings {
  std::vector<std::string> ids;
  Matrix vectors;
  std::vector<MoralLabelVector> labels;

  std::size_t size() const { return ids.size(); }
  LabeledEmbeddings subset(std::span<const std::size_t> rows) const;
};

enum class Modality { Image, Text };

/// One row per record: the image feature (by image_feature_id) or the text
/// feature of the record's active caption. Throws ValidationError on a missing id.
LabeledEmbeddings gather_embeddings(const Manifest& records, const FeatureBank& bank, Modality modality);

// --- MAP ---

struct MapResult {
  double value = 0.0;
  std::size_t queries_used = 0;
  /// Queries with no relevant corpus item; excluded rather than scored 0.
  std::size_t queries_skipped = 0;
};

/// Average precision of each query against the corpus, ranked by cosine
/// (descending; ties broken by item id). nullopt for queries with no relevant item.
std::vector<std::optional<double>> average_precisions(const LabeledEmbeddings& queries,
                                                      const LabeledEmbeddings& corpus, bool exclude_self);

/// Throws UndefinedMetricError when no query has a relevant item.
MapResult mean_average_precision(const LabeledEmbeddings& queries, const LabeledEmbeddings& corpus, bool exclude_self);

// --- Discriminative power and silhouette ---

/// Mean cosine over label-sharing pairs divided by mean cosine over non-sharing pairs (i < j).
double discriminative_power(const LabeledEmbeddings& bank);

/// Mean silhouette over collapsed polarity classes with cosine distance. Mixed
/// samples are excluded; members of singleton classes contribute 0.
double silhouette(const LabeledEmbeddings& bank);

// --- Bootstrap ---

struct MetricReport {
  std::string metric;
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t n_bootstrap = 0;
  std::size_t n_undefined = 0;
};

/// Raised when a metric is undefined on more than 10% of bootstrap resamples.
class InstabilityError : public UndefinedMetricError {
 public:
  using UndefinedMetricError::UndefinedMetricError;
};

/// Metric evaluated on a resample given as item indices (with repetition).
/// Signals "undefined" by throwing UndefinedMetricError.
using ResampledMetric = std::function<double(std::span<const std::size_t> indices)>;

/// Point estimate on all items plus the standard deviation of `n` resampled values.
MetricReport bootstrap(std::string metric, std::size_t n_items, const ResampledMetric& metric_fn, std::size_t n,
                       std::uint64_t seed);

MetricReport bootstrap_map(std::string metric, const LabeledEmbeddings& queries, const LabeledEmbeddings& corpus,
                           bool exclude_self, std::size_t n, std::uint64_t seed);
MetricReport bootstrap_discriminative_power(std::string metric, const LabeledEmbeddings& bank, std::size_t n,
                                            std::uint64_t seed);
MetricReport bootstrap_silhouette(std::string metric, const LabeledEmbeddings& bank, std::size_t n,
                                  std::uint64_t seed);

/// "metric,value,se,n" with a header row.
std::string metric_reports_to_csv(std::span<const MetricReport> reports);

// --- Retrieval ---

enum class Direction { I2I, T2T, I2T, T2I };
std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

struct RetrievedItem {
  std::string item_id;
  double similarity = 0.0;
  bool shares_label = false;
  MoralLabelVector label;
};

struct RetrievalResult {
  std::string query_id;
  Direction direction = Direction::I2I;
  MoralLabelVector query_label;
  std::vector<RetrievedItem> items;
};

/// Image and text embeddings of the same records, row-aligned by sample id.
struct RetrievalCorpus {
  LabeledEmbeddings images;
  LabeledEmbeddings texts;
};

/// Top-k items by cosine; the query itself is excluded for I2I and T2T.
/// k larger than the candidate count returns the full ranking.
RetrievalResult rank_retrieve(const RetrievalCorpus& corpus, std::string_view query_id, Direction direction,
                              std::size_t k);

std::string retrieval_to_json_line(const RetrievalResult& result);

}  // namespace moralclip
