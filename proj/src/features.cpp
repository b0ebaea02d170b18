#include "moralclip/features.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "moralclip/binary_io.hpp"

namespace moralclip {

FeatureBank::FeatureBank(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ValidationError("feature bank dimension must be at least 1");
}

void FeatureBank::add(std::string id, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw ValidationError("vector for '" + id + "' has length " + std::to_string(vector.size()) +
                          ", bank dimension is " + std::to_string(dim_));
  }
  if (index_.contains(id)) throw ValidationError("duplicate feature id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), vector.begin(), vector.end());
}

void FeatureBank::add(std::string id, std::span<const double> vector) {
  std::vector<float> narrowed(vector.begin(), vector.end());
  add(std::move(id), std::span<const float>(narrowed));
}

std::optional<std::size_t> FeatureBank::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureBank::index_of(std::string_view id) const {
  auto found = find(id);
  if (!found) throw ValidationError("unknown feature id '" + std::string(id) + "'");
  return *found;
}

Matrix FeatureBank::to_matrix() const {
  Matrix out(size(), dim_);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = values_[i];
  return out;
}

Matrix FeatureBank::gather(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), dim_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = row(rows[r]);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dim_; ++c) dst[c] = src[c];
  }
  return out;
}

bool operator==(const FeatureBank& a, const FeatureBank& b) {
  if (a.dim_ != b.dim_ || a.ids_ != b.ids_ || a.values_.size() != b.values_.size()) return false;
  // Bitwise comparison so that -0.0 vs 0.0 differences are caught.
  return std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

FeatureBank bank_from_matrix(const Matrix& m, std::span<const std::string> ids) {
  if (ids.size() != m.rows()) throw ValidationError("id count does not match matrix rows");
  FeatureBank bank(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) bank.add(ids[r], m.row(r));
  return bank;
}

std::vector<double> normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInputError("cannot normalize a zero or non-finite vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

SimilarityMatrix cosine_matrix(const Matrix& a, const Matrix& b, std::optional<double> temperature) {
  if (a.cols() != b.cols()) {
    throw ValidationError("dimension mismatch: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  if (temperature && !(*temperature > 0.0)) throw ValidationError("temperature must be positive");
  const Matrix an = normalize_rows(a);
  const Matrix bn = normalize_rows(b);
  SimilarityMatrix out;
  out.n_rows = a.rows();
  out.n_cols = b.rows();
  out.temperature_applied = temperature.has_value();
  out.values.resize(out.n_rows * out.n_cols);
  for (std::size_t i = 0; i < out.n_rows; ++i) {
    for (std::size_t j = 0; j < out.n_cols; ++j) {
      double s = dot(an.row(i), bn.row(j));
      if (temperature) s /= *temperature;
      out.values[i * out.n_cols + j] = s;
    }
  }
  return out;
}

SimilarityMatrix cosine_matrix(const FeatureBank& a, const FeatureBank& b, std::optional<double> temperature) {
  if (a.dim() != b.dim()) {
    throw ValidationError("dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  return cosine_matrix(a.to_matrix(), b.to_matrix(), temperature);
}

// --- MCFB ---

namespace {
constexpr std::string_view kBankMagic = "MCFB";
}

std::size_t encoded_bank_size(const FeatureBank& bank) {
  std::size_t n = 16;
  for (const auto& id : bank.ids()) n += 2 + id.size();
  return n + 4 * bank.dim() * bank.size();
}

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank) {
  ByteWriter w;
  w.buffer().reserve(encoded_bank_size(bank));
  w.bytes(kBankMagic);
  w.u32(kBankFormatVersion);
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  for (std::size_t r = 0; r < bank.size(); ++r) {
    const std::string& id = bank.id(r);
    if (id.size() > 0xFFFF) throw BinaryFormatError(BinaryErrc::IdTooLong, "feature id longer than 65535 bytes");
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.bytes(id);
    for (float v : bank.row(r)) {
      if (!std::isfinite(v)) {
        throw BinaryFormatError(BinaryErrc::NonFinite, "non-finite value in feature vector '" + id + "'");
      }
      w.f32(v);
    }
  }
  return std::move(w.buffer());
}

FeatureBank decode_bank(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::string magic = r.bytes(4);
  if (!r.ok()) throw BinaryFormatError(BinaryErrc::Truncated, "feature bank truncated in header");
  if (magic != kBankMagic) throw BinaryFormatError(BinaryErrc::BadMagic, "not a feature bank (bad magic)");
  const std::uint32_t version = r.u32();
  const std::uint32_t rows = r.u32();
  const std::uint32_t dim = r.u32();
  if (!r.ok()) throw BinaryFormatError(BinaryErrc::Truncated, "feature bank truncated in header");
  if (version != kBankFormatVersion) {
    throw BinaryFormatError(BinaryErrc::VersionMismatch, "unsupported feature bank version " + std::to_string(version));
  }
  if (dim == 0) throw BinaryFormatError(BinaryErrc::Truncated, "feature bank declares dimension 0");
  FeatureBank bank(dim);
  std::vector<float> vec(dim);
  for (std::uint32_t i = 0; i < rows; ++i) {
    const std::uint16_t len = r.u16();
    std::string id = r.bytes(len);
    for (auto& v : vec) v = r.f32();
    if (!r.ok()) {
      throw BinaryFormatError(BinaryErrc::Truncated,
                            "feature bank truncated at row " + std::to_string(i) + " of " + std::to_string(rows));
    }
    for (float v : vec) {
      if (!std::isfinite(v)) throw BinaryFormatError(BinaryErrc::NonFinite, "non-finite value in row '" + id + "'");
    }
    if (bank.find(id)) throw BinaryFormatError(BinaryErrc::DuplicateId, "duplicate feature id '" + id + "'");
    bank.add(std::move(id), std::span<const float>(vec));
  }
  if (r.remaining() != 0) {
    throw BinaryFormatError(BinaryErrc::TrailingBytes, "feature bank has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return bank;
}

void write_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  const auto bytes = encode_bank(bank);
  write_file_bytes(path, bytes);
}

FeatureBank read_bank(const std::filesystem::path& path) { return decode_bank(read_file_bytes(path)); }

// --- file helpers shared by the binary formats ---

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace moralclip
