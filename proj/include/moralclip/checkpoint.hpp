#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "moralclip/parameters.hpp"

namespace moralclip {

// "MCKP" container, little-endian, no padding:
//   magic[4] | version u32 | kind u32
//   | n_config u32 | { key_len u16, key, value_len u32, value }*
//   | n_tensors u32 | { name_len u16, name, rows u32, cols u32, rows*cols f32 }*

enum class CheckpointKind : std::uint32_t { Alignment = 1, Compass = 2 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;

  friend bool operator==(const NamedTensor& a, const NamedTensor& b);
};

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::Alignment;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<NamedTensor> tensors;

  /// Throws FormatError when the key is absent.
  const std::string& config_value(std::string_view key) const;
  const NamedTensor& tensor(std::string_view name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Appends every tensor of `params` under "<prefix><tensor name>".
void append_parameters(Checkpoint& ckpt, std::string_view prefix, const ParameterSet& params);
/// Fills `params` (whose layout is already established) from the prefixed tensors.
void load_parameters(const Checkpoint& ckpt, std::string_view prefix, ParameterSet& params);

/// Throws BinaryFormatError(NonFinite) on NaN/Inf tensor values.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace moralclip
