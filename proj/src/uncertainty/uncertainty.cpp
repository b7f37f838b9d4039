#include "uattr/uncertainty/uncertainty.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uattr::uncertainty {

namespace {

constexpr double kSimplexTolerance = 1e-6;
constexpr double kEntropyFloor = 1e-12;

void check_samples(const Classifier& c, const PosteriorSamples& s) {
  if (s.size() == 0) throw std::invalid_argument("posterior sample set is empty");
  const auto widths = c.hidden_widths();
  for (const auto& m : s.masks) {
    if (m.layers.size() != widths.size()) throw diff::ShapeError("posterior mask has the wrong number of layers");
    for (std::size_t l = 0; l < widths.size(); ++l) {
      if (m.layers[l].size() != widths[l]) throw diff::ShapeError("posterior mask width mismatch");
    }
  }
}

}  // namespace

double entropy(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("entropy of an empty distribution");
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v)) throw std::invalid_argument("distribution has a non-finite entry");
    if (v < -kSimplexTolerance) throw std::invalid_argument("distribution has a negative entry " + std::to_string(v));
    total += std::max(v, 0.0);
  }
  if (std::fabs(total - 1.0) > kSimplexTolerance) {
    throw std::invalid_argument("distribution sums to " + std::to_string(total) + ", not 1");
  }
  double h = 0.0;
  for (double v : p) {
    const double q = std::max(v, 0.0) / total;
    h -= q * std::log(std::max(q, kEntropyFloor));
  }
  return std::max(h, 0.0);
}

PosteriorSamples draw_posterior_samples(const Classifier& c, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("posterior sample count must be at least 1");
  PosteriorSamples s;
  s.seed = seed;
  models::Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) s.masks.push_back(c.sample_mask(rng));
  return s;
}

SampledHandles build_sampled(diff::Graph& g, const Classifier& c, diff::NodeId rows) {
  SampledHandles h;
  h.tile = g.leaf("samples.tile");
  h.average = g.leaf("samples.average");
  const auto tiled = g.matmul(h.tile, rows);
  h.net = c.network().build(g, tiled, true, "c");
  h.probs = h.net.output;
  h.mean = g.matmul(h.average, h.probs);
  return h;
}

SampledTensors stack_samples(const Classifier& c, const PosteriorSamples& s, std::size_t rows) {
  check_samples(c, s);
  if (rows == 0) throw std::invalid_argument("cannot tile zero input rows");
  const auto n = s.size();
  SampledTensors t{Tensor({rows * n, rows}), Tensor({rows, rows * n}), {}};
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      t.tile.data()[(k * n + i) * rows + k] = 1.0;
      t.average.data()[k * rows * n + k * n + i] = 1.0 / static_cast<double>(n);
    }
  }
  const auto layers = c.hidden_widths().size();
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<const Tensor*> stacked;
    stacked.reserve(rows * n);
    for (std::size_t k = 0; k < rows; ++k) {
      for (const auto& m : s.masks) stacked.push_back(&m.layers[l]);
    }
    t.masks.push_back(models::stack_rows(stacked));
  }
  return t;
}

void bind_sampled(diff::Bindings& b, const Classifier& c, const SampledHandles& h, const SampledTensors& t) {
  b.bind(h.tile, t.tile);
  b.bind(h.average, t.average);
  c.network().bind(b, h.net);
  for (std::size_t l = 0; l < t.masks.size(); ++l) b.bind(h.net.masks[l], t.masks[l]);
}

Tensor sample_predictions(const Classifier& c, const Tensor& x, const PosteriorSamples& s) {
  if (x.size() != c.input_dim()) {
    throw diff::ShapeError("classifier expects " + std::to_string(c.input_dim()) + " inputs, got " +
                           std::to_string(x.size()));
  }
  const auto t = stack_samples(c, s);
  diff::Graph g;
  const auto in = g.leaf("x");
  const auto h = build_sampled(g, c, in);
  g.set_output(h.probs);
  diff::Bindings b;
  const Tensor row = models::as_row(x);
  b.bind(in, row);
  bind_sampled(b, c, h, t);
  return diff::forward(g, b);
}

Tensor posterior_predictive(const Classifier& c, const Tensor& x, const PosteriorSamples& s) {
  const Tensor probs = sample_predictions(c, x, s);
  const auto n = probs.rows(), k = probs.cols();
  Tensor mean({k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) mean[j] += probs.at(i, j);
  }
  for (auto& v : mean.data()) v /= static_cast<double>(n);
  return mean;
}

UncertaintyReport decompose(const Tensor& sample_probs) {
  if (sample_probs.rank() != 2) throw diff::ShapeError("decompose expects [samples, classes]");
  const auto n = sample_probs.rows(), k = sample_probs.cols();
  std::vector<double> mean(k, 0.0);
  double aleatoric = 0.0;
  const auto data = sample_probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = data.subspan(i * k, k);
    aleatoric += entropy(row);
    for (std::size_t j = 0; j < k; ++j) mean[j] += row[j];
  }
  aleatoric /= static_cast<double>(n);
  for (auto& v : mean) v /= static_cast<double>(n);
  UncertaintyReport r;
  r.total = entropy(mean);
  r.aleatoric = aleatoric;
  r.epistemic = r.total - r.aleatoric;
  // Rounding can leave a negative residue of a few ulps when every sample agrees.
  if (r.epistemic < 0.0 && r.epistemic > -1e-12) r.epistemic = 0.0;
  return r;
}

UncertaintyReport decompose(const Classifier& c, const Tensor& x, const PosteriorSamples& s) {
  return decompose(sample_predictions(c, x, s));
}

}  // namespace uattr::uncertainty
