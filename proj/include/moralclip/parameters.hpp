#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moralclip {

struct TensorInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

/// Named row-major tensors packed into one flat buffer, so optimizers,
/// gradient checks and checkpoints all operate on a single span.
class ParameterSet {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::size_t size() const { return values_.size(); }

  const std::vector<TensorInfo>& layout() const { return layout_; }
  const TensorInfo* find(std::string_view name) const;

  std::span<double> tensor(std::size_t idx) { return {values_.data() + layout_[idx].offset, layout_[idx].size()}; }
  std::span<const double> tensor(std::size_t idx) const {
    return {values_.data() + layout_[idx].offset, layout_[idx].size()};
  }

  bool all_finite() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<TensorInfo> layout_;
  std::vector<double> values_;
};

}  // namespace moralclip
