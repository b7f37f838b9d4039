#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "uattr/diffcore/graph.hpp"

namespace uattr::models {

using diff::Bindings;
using diff::Graph;
using diff::NodeId;
using diff::Tensor;

using Rng = std::mt19937_64;

enum class Activation : std::uint8_t { Identity, Relu, Sigmoid, Softmax };

struct DenseLayer {
  Tensor weights;  // [in, out]
  Tensor bias;     // [out]
  Activation activation = Activation::Identity;

  std::size_t in() const { return weights.dim(0); }
  std::size_t out() const { return weights.dim(1); }
};

/// Graph nodes created for one Mlp instance.
struct MlpHandles {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
  std::vector<NodeId> masks;  // one per hidden layer when built with masks
  NodeId output{};
};

/// Stack of dense layers. Dropout masks, when present, multiply the
/// activations of every layer except the last.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static Mlp glorot(const std::vector<std::size_t>& sizes, Activation hidden, Activation last, Rng& rng);

  std::size_t input_dim() const { return layers_.front().in(); }
  std::size_t output_dim() const { return layers_.back().out(); }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  MlpHandles build(Graph& g, NodeId input, bool with_masks, const std::string& prefix) const;
  void bind(Bindings& b, const MlpHandles& h) const;

  /// Parameters in a fixed order (w0, b0, w1, b1, ...).
  std::vector<Tensor*> parameters();
  std::vector<NodeId> parameter_nodes(const MlpHandles& h) const;

  /// Deterministic batched forward with no dropout. `x` is [batch, in] or [in].
  Tensor forward(const Tensor& x) const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Stacks equally sized vectors into a [rows, cols] matrix.
Tensor stack_rows(const std::vector<const Tensor*>& rows);
Tensor as_row(const Tensor& x);

}  // namespace uattr::models
