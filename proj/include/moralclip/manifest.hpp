#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "moralclip/labels.hpp"

namespace moralclip {

enum class Source { Smid, ImageNet, Laion, Synthetic };
enum class Split { Unassigned, Train, Val, Test };
enum class Provenance { Expert, Compass, Synthetic };

std::string_view to_string(Source s);
std::string_view to_string(Split s);
std::string_view to_string(Provenance p);
Source parse_source(std::string_view s);
Split parse_split(std::string_view s);
Provenance parse_provenance(std::string_view s);

/// One image-text sample. `captions.front()` is the caption paired with the
/// image during training; text feature banks are keyed by caption string.
struct SampleRecord {
  std::string id;
  Source source = Source::Synthetic;
  std::string image_feature_id;
  std::vector<std::string> captions;
  MoralLabelVector label;
  Split split = Split::Unassigned;
  Provenance provenance = Provenance::Synthetic;

  const std::string& caption() const { return captions.front(); }

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

using Manifest = std::vector<SampleRecord>;

// Line-delimited JSON, one record per line:
// {"id":..,"source":..,"image_feature_id":..,"captions":[..],"label":"vxnnn","split":..,"provenance":..}
std::string record_to_json_line(const SampleRecord& record);
SampleRecord record_from_json_line(std::string_view line);

std::string format_manifest(const Manifest& records);
Manifest parse_manifest(std::string_view text);
void write_manifest(const Manifest& records, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Records whose split equals `split`, preserving order.
Manifest select_split(const Manifest& records, Split split);

}  // namespace moralclip
