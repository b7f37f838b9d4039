#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uattr/models/classifier.hpp"

namespace uattr::uncertainty {

using diff::Tensor;
using models::Classifier;
using models::DropoutMask;

inline constexpr std::size_t kDefaultSamples = 32;

/// Shannon entropy in nats. Entries within 1e-6 of the simplex are
/// clamped and renormalized; anything further off throws.
double entropy(std::span<const double> p);
inline double entropy(const Tensor& p) { return entropy(p.data()); }

/// N Monte-Carlo dropout draws, reused for every evaluation that should see
/// the same posterior sample set.
struct PosteriorSamples {
  std::vector<DropoutMask> masks;
  std::uint64_t seed = 0;

  std::size_t size() const { return masks.size(); }
};

PosteriorSamples draw_posterior_samples(const Classifier& c, std::size_t count = kDefaultSamples,
                                        std::uint64_t seed = 0);

/// Row i holds f(x, w_i); shape [N, classes].
Tensor sample_predictions(const Classifier& c, const Tensor& x, const PosteriorSamples& s);
Tensor posterior_predictive(const Classifier& c, const Tensor& x, const PosteriorSamples& s);

struct UncertaintyReport {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

/// Decomposition of a set of per-sample distributions given as rows.
UncertaintyReport decompose(const Tensor& sample_probs);
UncertaintyReport decompose(const Classifier& c, const Tensor& x, const PosteriorSamples& s);

/// Graph pieces that evaluate all N posterior draws for R input rows in one
/// batch. Row k*N + i of the tiled batch is input row k under draw i.
struct SampledHandles {
  models::MlpHandles net;
  diff::NodeId tile;     // [R*N, R] selector leaf
  diff::NodeId average;  // [R, R*N] leaf of 1/N blocks
  diff::NodeId probs;    // [R*N, classes]
  diff::NodeId mean;     // [R, classes]
};

/// Owned tensors behind a SampledHandles binding.
struct SampledTensors {
  Tensor tile;
  Tensor average;
  std::vector<Tensor> masks;
};

SampledHandles build_sampled(diff::Graph& g, const Classifier& c, diff::NodeId rows);
SampledTensors stack_samples(const Classifier& c, const PosteriorSamples& s, std::size_t rows = 1);
void bind_sampled(diff::Bindings& b, const Classifier& c, const SampledHandles& h, const SampledTensors& t);

}  // namespace uattr::uncertainty
