#include "moralclip/parameters.hpp"

#include <cmath>

namespace moralclip {

std::size_t ParameterSet::add(std::string name, std::size_t rows, std::size_t cols) {
  layout_.push_back({std::move(name), rows, cols, values_.size()});
  values_.resize(values_.size() + rows * cols, 0.0);
  return layout_.size() - 1;
}

const TensorInfo* ParameterSet::find(std::string_view name) const {
  for (const auto& t : layout_) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

bool ParameterSet::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace moralclip
