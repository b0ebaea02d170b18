#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "moralclip/errors.hpp"
#include "moralclip/labels.hpp"

namespace moralclip {

/// Validation failure tied to one request field.
class FieldError : public ValidationError {
 public:
  FieldError(std::string field, const std::string& message)
      : ValidationError(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class UnknownAnnotatorError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// --- batch plan ---

struct AnnotationBatch {
  std::string batch_id;
  std::vector<std::string> image_ids;
  std::vector<std::string> annotator_ids;
};

struct BatchPlan {
  std::vector<AnnotationBatch> batches;

  /// Throws ValidationError when an image or annotator appears in two batches.
  void validate() const;
  std::string to_json() const;
  static BatchPlan from_json(std::string_view text);
};

struct BatchPlanOptions {
  std::size_t n_batches = 4;
  std::size_t per_batch = 50;
  std::size_t annotators_per_batch = 3;
  std::uint64_t seed = 0;
  /// Defaults to "annotator-01", "annotator-02", ... when empty.
  std::vector<std::string> annotator_ids;
};

/// Seeded selection of n_batches * per_batch distinct images, partitioned into
/// batches. Throws ValidationError when there are too few images or annotators.
BatchPlan plan_batches(const std::vector<std::string>& image_ids, const BatchPlanOptions& options);

// --- ratings ---

struct RatingRecord {
  std::string annotator_id;
  std::string image_id;
  MoralLabelVector ratings;
  std::optional<std::string> note;
  std::string submitted_at;  // UTC, "YYYY-MM-DDTHH:MM:SSZ"

  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

std::string rating_to_json_line(const RatingRecord& r);
/// Strict parse of a submitted or stored record; errors name the offending field.
/// `require_timestamp` is false for client submissions.
RatingRecord rating_from_json(std::string_view text, bool require_timestamp);

std::string utc_timestamp_now();

/// Append-only line-delimited log. Each append is flushed to disk before
/// returning. On load a trailing partial line is discarded.
class RatingStore {
 public:
  explicit RatingStore(std::filesystem::path path);
  ~RatingStore();
  RatingStore(const RatingStore&) = delete;
  RatingStore& operator=(const RatingStore&) = delete;

  /// All records in append order.
  const std::vector<RatingRecord>& records() const { return records_; }
  std::size_t discarded_partial_lines() const { return discarded_; }

  void append(const RatingRecord& r);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<RatingRecord> records_;
  std::size_t discarded_ = 0;
};

// --- service ---

struct FoundationDescriptor {
  std::string key;
  std::string name;
  std::string description;
};

const std::vector<FoundationDescriptor>& foundation_descriptors();
std::string default_instructions();

struct Progress {
  std::size_t rated = 0;
  std::size_t total = 0;
};

struct Task {
  std::string batch_id;
  std::string image_id;
  std::size_t index = 0;  // position in the batch
  Progress progress;
  std::string to_json() const;
};

class AnnotationService {
 public:
  using Clock = std::function<std::string()>;

  AnnotationService(BatchPlan plan, std::filesystem::path store_path, std::string instructions,
                    std::filesystem::path image_dir, Clock clock = utc_timestamp_now);

  const std::string& instructions() const { return instructions_; }

  /// Lowest-index image of the annotator's batch without a rating; nullopt when done.
  /// Throws UnknownAnnotatorError.
  std::optional<Task> next_task(const std::string& annotator) const;

  /// Validates, stamps and durably appends. A later submission for the same
  /// (annotator, image) supersedes the earlier one.
  RatingRecord submit(const RatingRecord& submitted);

  Progress progress(const std::string& annotator) const;

  /// Latest record per (annotator, image), ordered by (image_id, annotator_id).
  std::vector<RatingRecord> latest() const;
  std::string export_json() const;

  /// Resolves an image id inside the image directory; nullopt when absent or unsafe.
  std::optional<std::filesystem::path> image_path(const std::string& image_id) const;

 private:
  const AnnotationBatch& batch_of(const std::string& annotator) const;

  BatchPlan plan_;
  std::map<std::string, std::size_t> batch_index_;  // annotator -> batch
  std::string instructions_;
  std::filesystem::path image_dir_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<RatingStore> store_;
  std::map<std::pair<std::string, std::string>, RatingRecord> latest_;  // (annotator, image)
};

/// HTTP front end over an AnnotationService.
class AnnotationHttpServer {
 public:
  explicit AnnotationHttpServer(AnnotationService& service);
  ~AnnotationHttpServer();

  /// Blocks serving on host:port until stop(); false when the address cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and serves on a background thread; returns the port or -1.
  int start_background(const std::string& host, int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace moralclip
