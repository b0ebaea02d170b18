#include "moralclip/matrix.hpp"

#include <cmath>

#include "moralclip/errors.hpp"

namespace moralclip {

double dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Matrix normalize_rows(const Matrix& m, std::vector<double>* norms) {
  Matrix out(m.rows(), m.cols());
  if (norms) norms->assign(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = l2_norm(m.row(r));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw DegenerateInputError("cannot normalize row " + std::to_string(r) + ": norm is zero or non-finite");
    }
    auto src = m.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c] / n;
    if (norms) (*norms)[r] = n;
  }
  return out;
}

Matrix multiply_transposed(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(ai, b.row(j));
  }
  return out;
}

}  // namespace moralclip
