#include "moralclip/encoder.hpp"

#include <cmath>

#include "moralclip/errors.hpp"

namespace moralclip {

ProjectionEncoder::ProjectionEncoder(const EncoderShape& shape) : shape_(shape) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.output_dim == 0) {
    throw ValidationError("encoder dimensions must be positive");
  }
  params_.add("w1", shape.hidden_dim, shape.input_dim);
  params_.add("b1", 1, shape.hidden_dim);
  params_.add("w2", shape.output_dim, shape.hidden_dim);
  params_.add("b2", 1, shape.output_dim);
  if (shape.bypass) {
    params_.add("bypass", shape.output_dim, shape.input_dim);
  } else {
    params_.add("bypass", 0, 0);
  }
}

ProjectionEncoder ProjectionEncoder::initialized(const EncoderShape& shape, Rng& rng) {
  ProjectionEncoder enc(shape);
  auto fill = [&rng](std::span<double> w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
  };
  fill(enc.w1(), shape.input_dim, shape.hidden_dim);
  fill(enc.w2(), shape.hidden_dim, shape.output_dim);
  if (shape.bypass) fill(enc.bypass(), shape.input_dim, shape.output_dim);
  return enc;
}

Matrix ProjectionEncoder::forward(const Matrix& x) const {
  Cache cache;
  return forward(x, cache);
}

Matrix ProjectionEncoder::forward(const Matrix& x, Cache& cache) const {
  if (x.cols() != shape_.input_dim) {
    throw ValidationError("encoder expects input dimension " + std::to_string(shape_.input_dim) + ", got " +
                          std::to_string(x.cols()));
  }
  const std::size_t n = x.rows();
  const std::size_t in = shape_.input_dim, hid = shape_.hidden_dim, out = shape_.output_dim;
  auto w1 = params_.tensor(0);
  auto b1 = params_.tensor(1);
  auto w2 = params_.tensor(2);
  auto b2 = params_.tensor(3);
  auto p = params_.tensor(4);

  cache.input = x;
  cache.hidden = Matrix(n, hid);
  Matrix y(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = x.row(r);
    auto hr = cache.hidden.row(r);
    for (std::size_t h = 0; h < hid; ++h) {
      hr[h] = std::tanh(b1[h] + dot(xr, w1.subspan(h * in, in)));
    }
    auto yr = y.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      double v = b2[o] + dot(hr, w2.subspan(o * hid, hid));
      if (shape_.bypass) v += dot(xr, p.subspan(o * in, in));
      yr[o] = v;
    }
  }
  return y;
}

void ProjectionEncoder::backward(const Cache& cache, const Matrix& grad_out, std::span<double> grad) const {
  const auto& layout = params_.layout();
  const std::size_t in = shape_.input_dim, hid = shape_.hidden_dim, out = shape_.output_dim;
  auto w2 = params_.tensor(2);
  auto gw1 = grad.subspan(layout[0].offset, layout[0].size());
  auto gb1 = grad.subspan(layout[1].offset, layout[1].size());
  auto gw2 = grad.subspan(layout[2].offset, layout[2].size());
  auto gb2 = grad.subspan(layout[3].offset, layout[3].size());
  auto gp = grad.subspan(layout[4].offset, layout[4].size());

  std::vector<double> g_pre(hid);
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    auto g = grad_out.row(r);
    auto hr = cache.hidden.row(r);
    auto xr = cache.input.row(r);
    std::fill(g_pre.begin(), g_pre.end(), 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      gb2[o] += go;
      auto gw2_row = gw2.subspan(o * hid, hid);
      auto w2_row = w2.subspan(o * hid, hid);
      for (std::size_t h = 0; h < hid; ++h) {
        gw2_row[h] += go * hr[h];
        g_pre[h] += go * w2_row[h];
      }
      if (shape_.bypass) {
        auto gp_row = gp.subspan(o * in, in);
        for (std::size_t i = 0; i < in; ++i) gp_row[i] += go * xr[i];
      }
    }
    for (std::size_t h = 0; h < hid; ++h) {
      const double gh = g_pre[h] * (1.0 - hr[h] * hr[h]);
      gb1[h] += gh;
      auto gw1_row = gw1.subspan(h * in, in);
      for (std::size_t i = 0; i < in; ++i) gw1_row[i] += gh * xr[i];
    }
  }
}

FeatureBank encode(const ProjectionEncoder& encoder, const FeatureBank& features) {
  if (features.dim() != encoder.shape().input_dim) {
    throw ValidationError("feature dimension " + std::to_string(features.dim()) + " does not match encoder input " +
                          std::to_string(encoder.shape().input_dim));
  }
  const Matrix out = encoder.forward(features.to_matrix());
  return bank_from_matrix(out, features.ids());
}

}  // namespace moralclip
