#pragma once

#include <cstdint>

#include "moralclip/features.hpp"
#include "moralclip/matrix.hpp"
#include "moralclip/parameters.hpp"
#include "moralclip/rng.hpp"

namespace moralclip {

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  /// Adds a trainable linear map from input straight to output.
  bool bypass = true;

  friend bool operator==(const EncoderShape&, const EncoderShape&) = default;
};

/// out = W2 tanh(W1 x + b1) + b2 [+ P x]
///
/// Outputs are not normalized; the losses and metrics normalize internally.
class ProjectionEncoder {
 public:
  /// All parameters zero.
  explicit ProjectionEncoder(const EncoderShape& shape);

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
  static ProjectionEncoder initialized(const EncoderShape& shape, Rng& rng);

  const EncoderShape& shape() const { return shape_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  std::span<double> w1() { return params_.tensor(0); }
  std::span<double> b1() { return params_.tensor(1); }
  std::span<double> w2() { return params_.tensor(2); }
  std::span<double> b2() { return params_.tensor(3); }
  std::span<double> bypass() { return params_.tensor(4); }

  struct Cache {
    Matrix input;
    Matrix hidden;  // post-tanh activations
  };

  /// Throws ValidationError when x.cols() != input_dim.
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;

  /// Adds d(loss)/d(parameters) into `grad`, which has the layout of parameters().
  void backward(const Cache& cache, const Matrix& grad_out, std::span<double> grad) const;

  friend bool operator==(const ProjectionEncoder&, const ProjectionEncoder&) = default;

 private:
  EncoderShape shape_;
  ParameterSet params_;
};

/// Encodes every row of `features`, keeping ids and order.
FeatureBank encode(const ProjectionEncoder& encoder, const FeatureBank& features);

}  // namespace moralclip
