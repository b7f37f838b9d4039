#include "uattr/models/classifier.hpp"

#include <stdexcept>
#include <utility>

namespace uattr::models {

Classifier::Classifier(Mlp network, double dropout_rate) : net_(std::move(network)), dropout_rate_(dropout_rate) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (net_.layers().back().activation != Activation::Softmax) {
    throw std::invalid_argument("classifier output layer must be softmax");
  }
}

Classifier Classifier::initialized(const std::vector<std::size_t>& sizes, double dropout_rate, std::uint64_t seed) {
  Rng rng(seed);
  return Classifier(Mlp::glorot(sizes, Activation::Relu, Activation::Softmax, rng), dropout_rate);
}

Classifier Classifier::zeros(const std::vector<std::size_t>& sizes, double dropout_rate) {
  Rng rng(0);
  auto net = Mlp::glorot(sizes, Activation::Relu, Activation::Softmax, rng);
  for (auto* p : net.parameters()) {
    for (auto& v : p->data()) v = 0.0;
  }
  return Classifier(std::move(net), dropout_rate);
}

std::vector<std::size_t> Classifier::hidden_widths() const {
  std::vector<std::size_t> w;
  const auto& layers = net_.layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) w.push_back(layers[i].out());
  return w;
}

void Classifier::check_input(const Tensor& x) const {
  if (x.size() != input_dim()) {
    throw diff::ShapeError("classifier expects " + std::to_string(input_dim()) + " inputs, got " +
                           std::to_string(x.size()));
  }
}

Tensor Classifier::predict(const Tensor& x) const {
  check_input(x);
  return net_.forward(as_row(x)).reshaped({num_classes()});
}

Tensor Classifier::predict(const Tensor& x, const DropoutMask& mask) const {
  check_input(x);
  const auto widths = hidden_widths();
  if (mask.layers.size() != widths.size()) throw diff::ShapeError("dropout mask has the wrong number of layers");
  std::vector<Tensor> rows;
  rows.reserve(widths.size());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (mask.layers[i].size() != widths[i]) throw diff::ShapeError("dropout mask width mismatch");
    rows.push_back(as_row(mask.layers[i]));
  }
  Graph g;
  auto in = g.leaf("x");
  auto h = net_.build(g, in, true, "c");
  g.set_output(h.output);
  Bindings b;
  const Tensor row = as_row(x);
  b.bind(in, row);
  net_.bind(b, h);
  for (std::size_t i = 0; i < rows.size(); ++i) b.bind(h.masks[i], rows[i]);
  return diff::forward(g, b).reshaped({num_classes()});
}

Tensor Classifier::predict_batch(const Tensor& xs) const {
  if (xs.rank() != 2 || xs.dim(1) != input_dim()) throw diff::ShapeError("predict_batch expects [batch, input]");
  return net_.forward(xs);
}

DropoutMask Classifier::sample_mask(Rng& rng) const {
  DropoutMask m;
  const double keep = 1.0 - dropout_rate_;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto w : hidden_widths()) {
    Tensor layer({w});
    for (auto& v : layer.data()) v = u(rng) < keep ? 1.0 / keep : 0.0;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

DropoutMask Classifier::identity_mask() const {
  DropoutMask m;
  for (auto w : hidden_widths()) m.layers.emplace_back(diff::Shape{w}, 1.0);
  return m;
}

std::size_t argmax(const Tensor& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

}  // namespace uattr::models
