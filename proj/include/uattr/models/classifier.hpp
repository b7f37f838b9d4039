#pragma once

#include <cstdint>
#include <vector>

#include "uattr/models/mlp.hpp"

namespace uattr::models {

/// One Bernoulli keep/drop draw per hidden unit, already scaled by
/// 1/(1-rate) for kept units (inverted dropout).
struct DropoutMask {
  std::vector<Tensor> layers;  // one [width] tensor per hidden layer
};

/// Dropout MLP mapping images to the probability simplex: relu hidden
/// layers, softmax output, dropout after every hidden layer.
class Classifier {
 public:
  Classifier() = default;
  Classifier(Mlp network, double dropout_rate);

  /// `sizes` = {input, hidden..., classes}.
  static Classifier initialized(const std::vector<std::size_t>& sizes, double dropout_rate, std::uint64_t seed);
  static Classifier zeros(const std::vector<std::size_t>& sizes, double dropout_rate);

  std::size_t input_dim() const { return net_.input_dim(); }
  std::size_t num_classes() const { return net_.output_dim(); }
  double dropout_rate() const { return dropout_rate_; }
  std::vector<std::size_t> hidden_widths() const;

  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }

  /// Deterministic forward (no mask). `x` has input_dim() entries; returns [classes].
  Tensor predict(const Tensor& x) const;
  Tensor predict(const Tensor& x, const DropoutMask& mask) const;
  /// Rows of `xs` ([batch, input]) mapped to rows of [batch, classes].
  Tensor predict_batch(const Tensor& xs) const;

  DropoutMask sample_mask(Rng& rng) const;
  /// Mask with every unit kept and unscaled; forward equals predict(x).
  DropoutMask identity_mask() const;

 private:
  void check_input(const Tensor& x) const;

  Mlp net_;
  double dropout_rate_ = 0.0;
};

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(const Tensor& p);

}  // namespace uattr::models
