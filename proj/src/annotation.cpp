#include "moralclip/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "moralclip/agreement.hpp"
#include "moralclip/binary_io.hpp"
#include "moralclip/features.hpp"
#include "moralclip/rng.hpp"

namespace moralclip {

using nlohmann::json;

// --- batch plan ---

void BatchPlan::validate() const {
  std::set<std::string> images, annotators, ids;
  for (const auto& b : batches) {
    if (!ids.insert(b.batch_id).second) throw ValidationError("duplicate batch id '" + b.batch_id + "'");
    if (b.image_ids.empty()) throw ValidationError("batch '" + b.batch_id + "' has no images");
    for (const auto& i : b.image_ids) {
      if (!images.insert(i).second) throw ValidationError("image '" + i + "' appears in more than one batch");
    }
    for (const auto& a : b.annotator_ids) {
      if (!annotators.insert(a).second) throw ValidationError("annotator '" + a + "' is assigned to more than one batch");
    }
  }
}

std::string BatchPlan::to_json() const {
  json doc = json::object();
  doc["batches"] = json::array();
  for (const auto& b : batches) {
    doc["batches"].push_back({{"batch_id", b.batch_id}, {"image_ids", b.image_ids}, {"annotator_ids", b.annotator_ids}});
  }
  return doc.dump(2) + "\n";
}

BatchPlan BatchPlan::from_json(std::string_view text) {
  BatchPlan plan;
  try {
    const json doc = json::parse(text);
    for (const auto& b : doc.at("batches")) {
      plan.batches.push_back({b.at("batch_id").get<std::string>(), b.at("image_ids").get<std::vector<std::string>>(),
                              b.at("annotator_ids").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid batch plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

BatchPlan plan_batches(const std::vector<std::string>& image_ids, const BatchPlanOptions& options) {
  if (options.n_batches == 0 || options.per_batch == 0 || options.annotators_per_batch == 0) {
    throw ValidationError("batch counts must be positive");
  }
  const std::size_t needed = options.n_batches * options.per_batch;
  const std::set<std::string> unique(image_ids.begin(), image_ids.end());
  if (unique.size() != image_ids.size()) throw ValidationError("image ids must be unique");
  if (image_ids.size() < needed) {
    throw ValidationError("need at least " + std::to_string(needed) + " images, got " + std::to_string(image_ids.size()));
  }
  std::vector<std::string> annotators = options.annotator_ids;
  const std::size_t n_annot = options.n_batches * options.annotators_per_batch;
  if (annotators.empty()) {
    for (std::size_t i = 1; i <= n_annot; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "annotator-%02zu", i);
      annotators.emplace_back(buf);
    }
  }
  if (annotators.size() < n_annot) {
    throw ValidationError("need " + std::to_string(n_annot) + " annotator ids, got " + std::to_string(annotators.size()));
  }
  std::vector<std::string> pool = image_ids;
  Rng rng(options.seed);
  rng.shuffle(std::span<std::string>(pool));
  BatchPlan plan;
  for (std::size_t b = 0; b < options.n_batches; ++b) {
    AnnotationBatch batch;
    batch.batch_id = "batch-" + std::to_string(b + 1);
    batch.image_ids.assign(pool.begin() + static_cast<std::ptrdiff_t>(b * options.per_batch),
                           pool.begin() + static_cast<std::ptrdiff_t>((b + 1) * options.per_batch));
    batch.annotator_ids.assign(annotators.begin() + static_cast<std::ptrdiff_t>(b * options.annotators_per_batch),
                               annotators.begin() + static_cast<std::ptrdiff_t>((b + 1) * options.annotators_per_batch));
    plan.batches.push_back(std::move(batch));
  }
  plan.validate();
  return plan;
}

// --- records ---

std::string rating_to_json_line(const RatingRecord& r) {
  json ratings = json::object();
  for (Foundation f : kAllFoundations) ratings[std::string(key_name(f))] = std::string(rating_word(r.ratings[f]));
  json doc = {{"annotator_id", r.annotator_id}, {"image_id", r.image_id}, {"ratings", ratings}};
  doc["note"] = r.note ? json(*r.note) : json(nullptr);
  doc["submitted_at"] = r.submitted_at;
  return doc.dump();
}

namespace {

const json& require_string(const json& doc, const char* field) {
  if (!doc.contains(field)) throw FieldError(field, "is required");
  const json& v = doc[field];
  if (!v.is_string()) throw FieldError(field, "must be a string");
  if (v.get_ref<const std::string&>().empty()) throw FieldError(field, "must not be empty");
  return v;
}

}  // namespace

RatingRecord rating_from_json(std::string_view text, bool require_timestamp) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error&) {
    throw FieldError("body", "is not valid JSON");
  }
  if (!doc.is_object()) throw FieldError("body", "must be a JSON object");
  RatingRecord r;
  r.annotator_id = require_string(doc, "annotator_id").get<std::string>();
  r.image_id = require_string(doc, "image_id").get<std::string>();
  if (!doc.contains("ratings") || !doc["ratings"].is_object()) throw FieldError("ratings", "must be an object");
  const json& ratings = doc["ratings"];
  for (auto it = ratings.begin(); it != ratings.end(); ++it) {
    bool known = false;
    for (Foundation f : kAllFoundations) known = known || it.key() == key_name(f);
    if (!known) throw FieldError("ratings." + it.key(), "is not a moral foundation");
  }
  for (Foundation f : kAllFoundations) {
    const std::string field = "ratings." + std::string(key_name(f));
    if (!ratings.contains(key_name(f))) throw FieldError(field, "is required");
    const json& v = ratings[std::string(key_name(f))];
    if (!v.is_string()) throw FieldError(field, "must be one of virtue, neutral, vice");
    const std::string word = v.get<std::string>();
    if (word != "virtue" && word != "neutral" && word != "vice") {
      throw FieldError(field, "'" + word + "' is not one of virtue, neutral, vice");
    }
    r.ratings.set(f, parse_rating_word(word, field));
  }
  if (doc.contains("note") && !doc["note"].is_null()) {
    if (!doc["note"].is_string()) throw FieldError("note", "must be a string or null");
    r.note = doc["note"].get<std::string>();
  }
  if (require_timestamp) r.submitted_at = require_string(doc, "submitted_at").get<std::string>();
  return r;
}

std::string utc_timestamp_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// --- store ---

RatingStore::RatingStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::string text;
  if (std::filesystem::exists(path_)) text = read_text_file(path_);

  std::size_t pos = 0, line_no = 0;
  std::size_t keep = 0;  // bytes of complete, valid lines
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      ++discarded_;  // interrupted append
      break;
    }
    const std::string_view line(text.data() + pos, nl - pos);
    if (!line.empty()) {
      try {
        records_.push_back(rating_from_json(line, true));
      } catch (const ValidationError& e) {
        throw FormatError("rating store '" + path_.string() + "' line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    pos = nl + 1;
    keep = pos;
  }

  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open rating store '" + path_.string() + "': " + std::strerror(errno));
  if (keep < text.size() && ::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
    throw IoError("cannot truncate partial line in '" + path_.string() + "'");
  }
}

RatingStore::~RatingStore() {
  if (fd_ >= 0) ::close(fd_);
}

void RatingStore::append(const RatingRecord& r) {
  const std::string line = rating_to_json_line(r) + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write to rating store failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw IoError("fsync of rating store failed: " + std::string(std::strerror(errno)));
  records_.push_back(r);
}

// --- service ---

const std::vector<FoundationDescriptor>& foundation_descriptors() {
  static const std::vector<FoundationDescriptor> kDescriptors = {
      {"care", "Care / Harm", "Kindness and protection of others versus cruelty and causing suffering."},
      {"fairness", "Fairness / Cheating", "Justice, reciprocity and equal treatment versus exploitation and deceit."},
      {"ingroup", "Loyalty / Betrayal", "Standing with one's group, family or nation versus treachery against it."},
      {"authority", "Authority / Subversion", "Respect for legitimate roles, traditions and order versus defiance of them."},
      {"purity", "Purity / Degradation", "Sanctity and cleanliness of body and spirit versus contamination and debasement."},
  };
  return kDescriptors;
}

std::string default_instructions() {
  std::string out =
      "Moral content rating\n\n"
      "For every image, rate each of the five moral foundations below. Pick exactly one option per foundation:\n"
      "  virtue  - the image shows the positive side of the foundation\n"
      "  vice    - the image shows the violation of the foundation\n"
      "  neutral - the foundation is not at stake in the image\n\n"
      "Go with your first impression; there is no time limit, but quick intuitive answers are preferred.\n"
      "Use the optional note to explain anything unusual.\n\n";
  for (const auto& d : foundation_descriptors()) out += d.name + ": " + d.description + "\n";
  return out;
}

std::string Task::to_json() const {
  json foundations = json::array();
  for (const auto& d : foundation_descriptors()) {
    foundations.push_back({{"key", d.key}, {"name", d.name}, {"description", d.description}});
  }
  return json{{"batch_id", batch_id},
              {"image_id", image_id},
              {"image_url", "/images/" + image_id},
              {"index", index},
              {"foundations", foundations},
              {"options", {"virtue", "neutral", "vice"}},
              {"progress", {{"rated", progress.rated}, {"total", progress.total}}}}
      .dump();
}

AnnotationService::AnnotationService(BatchPlan plan, std::filesystem::path store_path, std::string instructions,
                                     std::filesystem::path image_dir, Clock clock)
    : plan_(std::move(plan)), instructions_(std::move(instructions)), image_dir_(std::move(image_dir)), clock_(std::move(clock)) {
  plan_.validate();
  for (std::size_t b = 0; b < plan_.batches.size(); ++b) {
    for (const auto& a : plan_.batches[b].annotator_ids) batch_index_[a] = b;
  }
  store_ = std::make_unique<RatingStore>(std::move(store_path));
  for (const auto& r : store_->records()) latest_[{r.annotator_id, r.image_id}] = r;
}

const AnnotationBatch& AnnotationService::batch_of(const std::string& annotator) const {
  auto it = batch_index_.find(annotator);
  if (it == batch_index_.end()) throw UnknownAnnotatorError("unknown annotator '" + annotator + "'");
  return plan_.batches[it->second];
}

std::optional<Task> AnnotationService::next_task(const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  const auto& batch = batch_of(annotator);
  std::size_t rated = 0;
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < batch.image_ids.size(); ++i) {
    if (latest_.contains({annotator, batch.image_ids[i]})) {
      ++rated;
    } else if (!first) {
      first = i;
    }
  }
  if (!first) return std::nullopt;
  return Task{batch.batch_id, batch.image_ids[*first], *first, {rated, batch.image_ids.size()}};
}

RatingRecord AnnotationService::submit(const RatingRecord& submitted) {
  std::unique_lock lock(mutex_);
  const auto& batch = batch_of(submitted.annotator_id);
  if (std::find(batch.image_ids.begin(), batch.image_ids.end(), submitted.image_id) == batch.image_ids.end()) {
    throw FieldError("image_id", "'" + submitted.image_id + "' is not in the batch of annotator '" +
                                     submitted.annotator_id + "'");
  }
  RatingRecord r = submitted;
  r.submitted_at = clock_();
  store_->append(r);
  latest_[{r.annotator_id, r.image_id}] = r;
  return r;
}

Progress AnnotationService::progress(const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  const auto& batch = batch_of(annotator);
  Progress p{0, batch.image_ids.size()};
  for (const auto& img : batch.image_ids) p.rated += latest_.contains({annotator, img});
  return p;
}

std::vector<RatingRecord> AnnotationService::latest() const {
  std::shared_lock lock(mutex_);
  std::vector<RatingRecord> out;
  out.reserve(latest_.size());
  for (const auto& [_, r] : latest_) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const RatingRecord& a, const RatingRecord& b) {
    return std::tie(a.image_id, a.annotator_id) < std::tie(b.image_id, b.annotator_id);
  });
  return out;
}

std::string AnnotationService::export_json() const {
  std::string out = "{\"ratings\":[";
  bool first = true;
  for (const auto& r : latest()) {
    if (!first) out += ",";
    out += "\n" + rating_to_json_line(r);
    first = false;
  }
  out += "\n]}\n";
  return out;
}

std::optional<std::filesystem::path> AnnotationService::image_path(const std::string& image_id) const {
  if (image_id.empty() || image_id.find('/') != std::string::npos || image_id.find('\\') != std::string::npos ||
      image_id == "." || image_id == "..") {
    return std::nullopt;
  }
  std::error_code ec;
  for (const char* ext : {"", ".jpg", ".jpeg", ".png", ".webp", ".gif"}) {
    auto p = image_dir_ / (image_id + ext);
    if (std::filesystem::is_regular_file(p, ec)) return p;
  }
  return std::nullopt;
}

// --- HTTP ---

struct AnnotationHttpServer::Impl {
  AnnotationService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(AnnotationService& s) : service(s) { routes(); }

  static void error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    json body = {{"error", message}};
    if (!field.empty()) body["field"] = field;
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void routes() {
    server.Get("/instructions", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(service.instructions(), "text/plain; charset=utf-8");
    });
    server.Get("/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("annotator")) return error(res, 400, "annotator query parameter is required", "annotator");
      try {
        auto task = service.next_task(req.get_param_value("annotator"));
        if (!task) {
          res.status = 204;
          return;
        }
        res.set_content(task->to_json(), "application/json");
      } catch (const UnknownAnnotatorError& e) {
        error(res, 404, e.what(), "annotator");
      }
    });
    server.Post("/ratings", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const RatingRecord stored = service.submit(rating_from_json(req.body, false));
        res.status = 201;
        res.set_content(rating_to_json_line(stored), "application/json");
      } catch (const UnknownAnnotatorError& e) {
        error(res, 404, e.what(), "annotator_id");
      } catch (const FieldError& e) {
        error(res, 400, e.what(), e.field());
      } catch (const IoError& e) {
        error(res, 500, e.what());
      }
    });
    server.Get(R"(/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto path = service.image_path(req.matches[1]);
      if (!path) return error(res, 404, "image not found");
      std::string type = "application/octet-stream";
      const auto ext = path->extension().string();
      if (ext == ".jpg" || ext == ".jpeg") type = "image/jpeg";
      if (ext == ".png") type = "image/png";
      if (ext == ".webp") type = "image/webp";
      if (ext == ".gif") type = "image/gif";
      res.set_content(read_text_file(*path), type);
    });
    server.Get("/progress", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("annotator")) return error(res, 400, "annotator query parameter is required", "annotator");
      try {
        const auto p = service.progress(req.get_param_value("annotator"));
        res.set_content(json{{"rated", p.rated}, {"total", p.total}}.dump(), "application/json");
      } catch (const UnknownAnnotatorError& e) {
        error(res, 404, e.what(), "annotator");
      }
    });
    server.Get("/export", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(service.export_json(), "application/json");
    });
  }
};

AnnotationHttpServer::AnnotationHttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {}

AnnotationHttpServer::~AnnotationHttpServer() { stop(); }

bool AnnotationHttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int AnnotationHttpServer::start_background(const std::string& host, int port) {
  if (port == 0) {
    port = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) return -1;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void AnnotationHttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace moralclip
