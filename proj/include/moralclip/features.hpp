#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "moralclip/errors.hpp"
#include "moralclip/matrix.hpp"

namespace moralclip {

/// Fixed-dimension float32 vectors keyed by unique sample id, in insertion order.
class FeatureBank {
 public:
  explicit FeatureBank(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  /// Appends a row. Throws ValidationError on a duplicate id or wrong length.
  void add(std::string id, std::span<const float> vector);
  void add(std::string id, std::span<const double> vector);

  const std::string& id(std::size_t row) const { return ids_[row]; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> row(std::size_t r) const { return {values_.data() + r * dim_, dim_}; }
  std::span<const float> values() const { return values_; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Throws ValidationError when the id is unknown.
  std::size_t index_of(std::string_view id) const;

  /// Widens all rows to double precision.
  Matrix to_matrix() const;
  Matrix gather(std::span<const std::size_t> rows) const;

  friend bool operator==(const FeatureBank& a, const FeatureBank& b);

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Builds a bank from a double matrix (values are rounded to float32).
FeatureBank bank_from_matrix(const Matrix& m, std::span<const std::string> ids);

/// Unit-length copy of v. Throws DegenerateInputError on a zero (or non-finite) norm.
std::vector<double> normalize(std::span<const double> v);

struct SimilarityMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;  // row-major
  bool temperature_applied = false;

  double operator()(std::size_t r, std::size_t c) const { return values[r * n_cols + c]; }
};

/// Entry (i, j) is the cosine of a_i and b_j, divided by `temperature` when given.
SimilarityMatrix cosine_matrix(const FeatureBank& a, const FeatureBank& b,
                               std::optional<double> temperature = std::nullopt);
SimilarityMatrix cosine_matrix(const Matrix& a, const Matrix& b, std::optional<double> temperature = std::nullopt);

// --- binary bank format ("MCFB") ---

enum class BinaryErrc { BadMagic, VersionMismatch, Truncated, TrailingBytes, DuplicateId, NonFinite, IdTooLong };

class BinaryFormatError : public FormatError {
 public:
  BinaryFormatError(BinaryErrc code, const std::string& what) : FormatError(what), code_(code) {}
  BinaryErrc code() const { return code_; }

 private:
  BinaryErrc code_;
};

inline constexpr std::uint32_t kBankFormatVersion = 1;

/// Serialized size: 16 + sum(2 + id bytes) + 4 * dim * rows.
std::size_t encoded_bank_size(const FeatureBank& bank);

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank);
FeatureBank decode_bank(std::span<const std::uint8_t> bytes);

void write_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank read_bank(const std::filesystem::path& path);

}  // namespace moralclip
