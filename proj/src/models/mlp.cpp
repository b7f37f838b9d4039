#include "uattr/models/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace uattr::models {

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("an Mlp needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rank() != 2 || l.bias.size() != l.out()) {
      throw std::invalid_argument("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw std::invalid_argument("layer " + std::to_string(i) + " input width does not match previous output");
    }
  }
}

Mlp Mlp::glorot(const std::vector<std::size_t>& sizes, Activation hidden, Activation last, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("an Mlp needs input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto fan_in = sizes[i], fan_out = sizes[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weights = Tensor({fan_in, fan_out});
    for (auto& w : layer.weights.data()) w = u(rng);
    layer.bias = Tensor({fan_out});
    layer.activation = (i + 2 == sizes.size()) ? last : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

MlpHandles Mlp::build(Graph& g, NodeId input, bool with_masks, const std::string& prefix) const {
  MlpHandles h;
  NodeId cur = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto tag = prefix + std::to_string(i);
    auto w = g.leaf(tag + ".w");
    auto b = g.leaf(tag + ".b");
    h.weights.push_back(w);
    h.biases.push_back(b);
    cur = g.add(g.matmul(cur, w), b);
    switch (layers_[i].activation) {
      case Activation::Identity: break;
      case Activation::Relu: cur = g.relu(cur); break;
      case Activation::Sigmoid: cur = g.sigmoid(cur); break;
      case Activation::Softmax: cur = g.softmax(cur); break;
    }
    if (with_masks && i + 1 < layers_.size()) {
      auto m = g.leaf(tag + ".mask");
      h.masks.push_back(m);
      cur = g.mul(cur, m);
    }
  }
  h.output = cur;
  return h;
}

void Mlp::bind(Bindings& b, const MlpHandles& h) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    b.bind(h.weights[i], layers_[i].weights);
    b.bind(h.biases[i], layers_[i].bias);
  }
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> p;
  for (auto& l : layers_) {
    p.push_back(&l.weights);
    p.push_back(&l.bias);
  }
  return p;
}

std::vector<NodeId> Mlp::parameter_nodes(const MlpHandles& h) const {
  std::vector<NodeId> p;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    p.push_back(h.weights[i]);
    p.push_back(h.biases[i]);
  }
  return p;
}

Tensor Mlp::forward(const Tensor& x) const {
  Graph g;
  auto in = g.leaf("x");
  auto h = build(g, in, false, "l");
  g.set_output(h.output);
  Bindings b;
  const Tensor input = x.rank() == 1 ? as_row(x) : x;
  b.bind(in, input);
  bind(b, h);
  return diff::forward(g, b);
}

Tensor stack_rows(const std::vector<const Tensor*>& rows) {
  if (rows.empty()) throw std::invalid_argument("cannot stack zero rows");
  const auto cols = rows.front()->size();
  Tensor out({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]->size() != cols) throw std::invalid_argument("cannot stack rows of different lengths");
    auto src = rows[r]->data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return out;
}

Tensor as_row(const Tensor& x) { return x.reshaped({1, x.size()}); }

}  // namespace uattr::models
