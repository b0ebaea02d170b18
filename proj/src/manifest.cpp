#include "moralclip/manifest.hpp"

#include <json.hpp>

#include "moralclip/binary_io.hpp"
#include "moralclip/errors.hpp"

namespace moralclip {

using nlohmann::json;

std::string_view to_string(Source s) {
  switch (s) {
    case Source::Smid: return "smid";
    case Source::ImageNet: return "imagenet";
    case Source::Laion: return "laion";
    case Source::Synthetic: return "synthetic";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Expert: return "expert";
    case Provenance::Compass: return "compass";
    case Provenance::Synthetic: return "synthetic";
  }
  return "?";
}

Source parse_source(std::string_view s) {
  if (s == "smid") return Source::Smid;
  if (s == "imagenet") return Source::ImageNet;
  if (s == "laion") return Source::Laion;
  if (s == "synthetic") return Source::Synthetic;
  throw FormatError("unknown source '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s == "unassigned" || s.empty()) return Split::Unassigned;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
  if (s == "expert") return Provenance::Expert;
  if (s == "compass") return Provenance::Compass;
  if (s == "synthetic") return Provenance::Synthetic;
  throw FormatError("unknown provenance '" + std::string(s) + "'");
}

std::string record_to_json_line(const SampleRecord& r) {
  json j = json::object();
  j["id"] = r.id;
  j["source"] = to_string(r.source);
  j["image_feature_id"] = r.image_feature_id;
  j["captions"] = r.captions;
  j["label"] = serialize_label(r.label);
  if (r.split == Split::Unassigned) {
    j["split"] = nullptr;
  } else {
    j["split"] = to_string(r.split);
  }
  j["provenance"] = to_string(r.provenance);
  return j.dump();
}

namespace {

std::string require_string(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw FormatError(std::string("manifest record missing string field '") + field + "'");
  }
  return j[field].get<std::string>();
}

}  // namespace

SampleRecord record_from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed manifest line: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("manifest line is not an object");
  SampleRecord r;
  r.id = require_string(j, "id");
  r.source = parse_source(require_string(j, "source"));
  r.image_feature_id = require_string(j, "image_feature_id");
  if (!j.contains("captions") || !j["captions"].is_array() || j["captions"].empty()) {
    throw FormatError("manifest record '" + r.id + "' needs a non-empty captions array");
  }
  for (const auto& c : j["captions"]) {
    if (!c.is_string()) throw FormatError("manifest record '" + r.id + "' has a non-string caption");
    r.captions.push_back(c.get<std::string>());
  }
  r.label = parse_label(require_string(j, "label"));
  if (j.contains("split") && !j["split"].is_null()) {
    if (!j["split"].is_string()) throw FormatError("manifest record '" + r.id + "' has a non-string split");
    r.split = parse_split(j["split"].get<std::string>());
  }
  r.provenance = parse_provenance(require_string(j, "provenance"));
  return r;
}

std::string format_manifest(const Manifest& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json_line(r);
    out += '\n';
  }
  return out;
}

Manifest parse_manifest(std::string_view text) {
  Manifest out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(const Manifest& records, const std::filesystem::path& path) {
  write_text_file(path, format_manifest(records));
}

Manifest read_manifest(const std::filesystem::path& path) { return parse_manifest(read_text_file(path)); }

Manifest select_split(const Manifest& records, Split split) {
  Manifest out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

}  // namespace moralclip
