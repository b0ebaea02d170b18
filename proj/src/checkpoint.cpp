#include "moralclip/checkpoint.hpp"

#include <cmath>
#include <cstring>

#include "moralclip/binary_io.hpp"
#include "moralclip/features.hpp"

namespace moralclip {

namespace {
constexpr std::string_view kCheckpointMagic = "MCKP";
}

bool operator==(const NamedTensor& a, const NamedTensor& b) {
  return a.name == b.name && a.rows == b.rows && a.cols == b.cols && a.values.size() == b.values.size() &&
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

const std::string& Checkpoint::config_value(std::string_view key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  throw FormatError("checkpoint has no config entry '" + std::string(key) + "'");
}

const NamedTensor& Checkpoint::tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + std::string(name) + "'");
}

void append_parameters(Checkpoint& ckpt, std::string_view prefix, const ParameterSet& params) {
  for (std::size_t i = 0; i < params.layout().size(); ++i) {
    const auto& info = params.layout()[i];
    NamedTensor t;
    t.name = std::string(prefix) + info.name;
    t.rows = static_cast<std::uint32_t>(info.rows);
    t.cols = static_cast<std::uint32_t>(info.cols);
    auto src = params.tensor(i);
    t.values.assign(src.begin(), src.end());
    ckpt.tensors.push_back(std::move(t));
  }
}

void load_parameters(const Checkpoint& ckpt, std::string_view prefix, ParameterSet& params) {
  for (std::size_t i = 0; i < params.layout().size(); ++i) {
    const auto& info = params.layout()[i];
    const NamedTensor& t = ckpt.tensor(std::string(prefix) + info.name);
    if (t.rows != info.rows || t.cols != info.cols) {
      throw FormatError("checkpoint tensor '" + t.name + "' has shape " + std::to_string(t.rows) + "x" +
                        std::to_string(t.cols) + ", expected " + std::to_string(info.rows) + "x" +
                        std::to_string(info.cols));
    }
    auto dst = params.tensor(i);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = t.values[k];
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.kind));
  w.u32(static_cast<std::uint32_t>(ckpt.config.size()));
  for (const auto& [k, v] : ckpt.config) {
    if (k.size() > 0xFFFF) throw BinaryFormatError(BinaryErrc::IdTooLong, "config key too long");
    w.u16(static_cast<std::uint16_t>(k.size()));
    w.bytes(k);
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.bytes(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF) throw BinaryFormatError(BinaryErrc::IdTooLong, "tensor name too long");
    if (t.values.size() != static_cast<std::size_t>(t.rows) * t.cols) {
      throw ValidationError("tensor '" + t.name + "' value count does not match its shape");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(t.rows);
    w.u32(t.cols);
    for (float v : t.values) {
      if (!std::isfinite(v)) throw BinaryFormatError(BinaryErrc::NonFinite, "non-finite value in tensor '" + t.name + "'");
      w.f32(v);
    }
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto truncated = [](const std::string& where) {
    return BinaryFormatError(BinaryErrc::Truncated, "checkpoint truncated in " + where);
  };
  const std::string magic = r.bytes(4);
  if (!r.ok()) throw truncated("header");
  if (magic != kCheckpointMagic) throw BinaryFormatError(BinaryErrc::BadMagic, "not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  const std::uint32_t kind = r.u32();
  if (!r.ok()) throw truncated("header");
  if (version != kCheckpointVersion) {
    throw BinaryFormatError(BinaryErrc::VersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  if (kind != 1 && kind != 2) throw FormatError("unknown checkpoint kind " + std::to_string(kind));
  Checkpoint ckpt;
  ckpt.kind = static_cast<CheckpointKind>(kind);

  const std::uint32_t n_config = r.u32();
  for (std::uint32_t i = 0; i < n_config && r.ok(); ++i) {
    std::string key = r.bytes(r.u16());
    std::string value = r.bytes(r.u32());
    ckpt.config.emplace_back(std::move(key), std::move(value));
  }
  if (!r.ok()) throw truncated("config block");

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors && r.ok(); ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u16());
    t.rows = r.u32();
    t.cols = r.u32();
    if (!r.ok()) break;
    const std::size_t count = static_cast<std::size_t>(t.rows) * t.cols;
    if (count * 4 > r.remaining()) throw truncated("tensor '" + t.name + "'");
    t.values.resize(count);
    for (float& v : t.values) {
      v = r.f32();
      if (!std::isfinite(v)) throw BinaryFormatError(BinaryErrc::NonFinite, "non-finite value in tensor '" + t.name + "'");
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.ok()) throw truncated("tensor block");
  if (r.remaining() != 0) {
    throw BinaryFormatError(BinaryErrc::TrailingBytes, "checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace moralclip
