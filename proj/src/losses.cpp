#include "moralclip/losses.hpp"

#include <algorithm>
#include <cmath>

#include "moralclip/errors.hpp"

namespace moralclip {

namespace {

struct NormalizedPair {
  Matrix image;  // unit rows
  Matrix text;
  std::vector<double> image_norms;
  std::vector<double> text_norms;
  Matrix cosine;  // image x text
};

void check_batch(const Matrix& image, const Matrix& text) {
  if (image.rows() == 0) throw ValidationError("batch size must be at least 1");
  if (image.rows() != text.rows()) {
    throw ValidationError("image and text batches differ in size: " + std::to_string(image.rows()) + " vs " +
                          std::to_string(text.rows()));
  }
  if (image.cols() != text.cols()) {
    throw ValidationError("image and text embeddings differ in dimension: " + std::to_string(image.cols()) + " vs " +
                          std::to_string(text.cols()));
  }
}

NormalizedPair normalize_pair(const Matrix& image, const Matrix& text) {
  NormalizedPair p;
  p.image = normalize_rows(image, &p.image_norms);
  p.text = normalize_rows(text, &p.text_norms);
  p.cosine = multiply_transposed(p.image, p.text);
  return p;
}

// Back-propagates d(loss)/d(cosine) through the dot products and the row
// normalizations: for u = x/|x|, dL/dx = (g - (g.u) u) / |x|.
void backprop_cosine(const NormalizedPair& p, const Matrix& grad_cos, Matrix& grad_image, Matrix& grad_text) {
  const std::size_t n = p.image.rows(), m = p.text.rows(), d = p.image.cols();
  Matrix gu(n, d), gv(m, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double g = grad_cos(i, j);
      if (g == 0.0) continue;
      auto ui = p.image.row(i);
      auto vj = p.text.row(j);
      auto gui = gu.row(i);
      auto gvj = gv.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        gui[k] += g * vj[k];
        gvj[k] += g * ui[k];
      }
    }
  }
  auto project = [d](const Matrix& unit, const std::vector<double>& norms, const Matrix& gunit, Matrix& out) {
    out = Matrix(unit.rows(), d);
    for (std::size_t r = 0; r < unit.rows(); ++r) {
      const double radial = dot(gunit.row(r), unit.row(r));
      auto o = out.row(r);
      auto u = unit.row(r);
      auto g = gunit.row(r);
      for (std::size_t k = 0; k < d; ++k) o[k] = (g[k] - radial * u[k]) / norms[r];
    }
  };
  project(p.image, p.image_norms, gu, grad_image);
  project(p.text, p.text_norms, gv, grad_text);
}

}  // namespace

LossValue clip_contrastive_loss(const Matrix& image, const Matrix& text, double temperature) {
  check_batch(image, text);
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  const NormalizedPair p = normalize_pair(image, text);
  const std::size_t n = image.rows();
  const double inv_t = 1.0 / temperature;

  Matrix grad_logits(n, n);
  double loss_rows = 0.0, loss_cols = 0.0;
  const double w = 0.5 / static_cast<double>(n);

  // Image -> text: softmax over each row.
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, p.cosine(i, j) * inv_t);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(p.cosine(i, j) * inv_t - mx);
    const double log_z = mx + std::log(z);
    loss_rows += log_z - p.cosine(i, i) * inv_t;
    for (std::size_t j = 0; j < n; ++j) {
      const double prob = std::exp(p.cosine(i, j) * inv_t - log_z);
      grad_logits(i, j) += w * (prob - (i == j ? 1.0 : 0.0));
    }
  }
  // Text -> image: softmax over each column.
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, p.cosine(i, j) * inv_t);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(p.cosine(i, j) * inv_t - mx);
    const double log_z = mx + std::log(z);
    loss_cols += log_z - p.cosine(j, j) * inv_t;
    for (std::size_t i = 0; i < n; ++i) {
      const double prob = std::exp(p.cosine(i, j) * inv_t - log_z);
      grad_logits(i, j) += w * (prob - (i == j ? 1.0 : 0.0));
    }
  }

  Matrix grad_cos(n, n);
  for (std::size_t k = 0; k < grad_cos.values().size(); ++k) grad_cos.values()[k] = grad_logits.values()[k] * inv_t;

  LossValue out;
  out.value = w * (loss_rows + loss_cols);
  backprop_cosine(p, grad_cos, out.grad_image, out.grad_text);
  return out;
}

LossValue moral_loss(const Matrix& image, const Matrix& text, std::span<const MoralLabelVector> image_labels,
                     std::span<const MoralLabelVector> text_labels, double temperature,
                     const MoralLossOptions& options) {
  check_batch(image, text);
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  const std::size_t n = image.rows();
  if (image_labels.size() != n || text_labels.size() != n) {
    throw ValidationError("label count does not match batch size " + std::to_string(n));
  }
  if (!options.include_diagonal && n < 2) {
    throw ValidationError("moral loss without diagonal terms needs at least 2 samples");
  }
  const NormalizedPair p = normalize_pair(image, text);
  const double scale = options.scale == MoralScale::Literal ? 1.0 / temperature : 1.0;
  const double count = options.include_diagonal ? static_cast<double>(n * n) : static_cast<double>(n * (n - 1));

  Matrix grad_cos(n, n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j && !options.include_diagonal) continue;
      const double residual = p.cosine(i, j) * scale - moral_similarity(image_labels[i], text_labels[j]);
      sum += residual * residual;
      grad_cos(i, j) = 2.0 * residual * scale / count;
    }
  }
  LossValue out;
  out.value = sum / count;
  backprop_cosine(p, grad_cos, out.grad_image, out.grad_text);
  return out;
}

LossReport total_loss(const Matrix& image, const Matrix& text, std::span<const MoralLabelVector> image_labels,
                      std::span<const MoralLabelVector> text_labels, double lambda, double temperature,
                      const MoralLossOptions& options) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  const LossValue clip = clip_contrastive_loss(image, text, temperature);
  const LossValue moral = moral_loss(image, text, image_labels, text_labels, temperature, options);

  LossReport r;
  r.clip_term = clip.value;
  r.moral_term = moral.value;
  r.total = (1.0 - lambda) * clip.value + lambda * moral.value;
  r.grad_image = Matrix(image.rows(), image.cols());
  r.grad_text = Matrix(text.rows(), text.cols());
  for (std::size_t k = 0; k < r.grad_image.values().size(); ++k) {
    r.grad_image.values()[k] = (1.0 - lambda) * clip.grad_image.values()[k] + lambda * moral.grad_image.values()[k];
    r.grad_text.values()[k] = (1.0 - lambda) * clip.grad_text.values()[k] + lambda * moral.grad_text.values()[k];
  }
  return r;
}

}  // namespace moralclip
