#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uattr/attribution/latent_search.hpp"
#include "uattr/attribution/path.hpp"
#include "uattr/uncertainty/uncertainty.hpp"

namespace uattr::attribution {

using uncertainty::PosteriorSamples;

/// Predictive entropy F and its input gradient for batches of images.
/// With samples, F is the entropy of the posterior predictive over the
/// shared mask set; without, the entropy of the deterministic forward.
class EntropyObjective {
 public:
  EntropyObjective(const Classifier& c, const PosteriorSamples* samples);

  std::vector<double> values(const Tensor& points) const;
  Tensor gradients(const Tensor& points) const;

 private:
  const Classifier* c_;
  const PosteriorSamples* samples_;
};

/// Per-row gradients of the total and aleatoric entropies, written as the
/// expectations over posterior draws with a constant (1 + log p) coefficient.
struct BayesianGradients {
  Tensor full;
  Tensor aleatoric;
};
BayesianGradients bayesian_gradients(const Classifier& c, const PosteriorSamples& s, const Tensor& points);

struct AttributionMap {
  Tensor values;
  std::string fiducial;
  PathMode path_mode = PathMode::Straight;
  double f_input = 0.0;
  double f_fiducial = 0.0;
  double residual = 0.0;  // |sum(values) - (f_input - f_fiducial)|
  std::optional<CounterfactualResult> counterfactual;

  double total() const;
};

AttributionMap attribute_entropy(const Classifier& c, const IntegrationPath& path,
                                 const PosteriorSamples* samples = nullptr);

struct BayesianMaps {
  AttributionMap full;
  AttributionMap aleatoric;
  AttributionMap epistemic;
};

BayesianMaps attribute_bayesian(const Classifier& c, const IntegrationPath& path, const PosteriorSamples& s);

/// Straight-path attribution of the entropy from a fixed or searched fiducial.
/// Counterfactual kind needs `vae`; black+white averages both maps.
AttributionMap ig_attribute(const Classifier& c, const Tensor& x, const FiducialSpec& fiducial, std::size_t bins,
                            const PosteriorSamples* samples = nullptr, const VaeModel* vae = nullptr);

struct GenerativeSpec {
  FiducialSpec fiducial{FiducialKind::Counterfactual};
  DescentConfig reconstruction{};
  PathSpec path{};
};

/// Fiducial search, reconstruction search and path for one image.
struct GenerativePlan {
  CounterfactualResult counterfactual;
  ReconstructionResult reconstruction;
  IntegrationPath path;
};

GenerativePlan plan_generative(const Classifier& c, const VaeModel& v, const Tensor& x, const GenerativeSpec& spec);

AttributionMap generative_attribute(const Classifier& c, const VaeModel& v, const Tensor& x,
                                    const GenerativeSpec& spec, const PosteriorSamples* samples = nullptr);
BayesianMaps bayesian_generative_attribute(const Classifier& c, const VaeModel& v, const Tensor& x,
                                           const GenerativeSpec& spec, const PosteriorSamples& s);

std::string fiducial_name(FiducialKind k);

}  // namespace uattr::attribution
