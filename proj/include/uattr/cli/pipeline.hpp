#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uattr/attribution/attribute.hpp"
#include "uattr/cli/config.hpp"
#include "uattr/evaluation/evaluation.hpp"
#include "uattr/models/training.hpp"

namespace uattr::cli {

enum class Method : std::uint8_t { IgBlack, IgWhite, IgBlackWhite, IgCounterfactual, Generative, BayesianGenerative };

Method parse_method(const std::string& name);
std::string method_name(Method m);
const std::vector<Method>& all_methods();

struct Datasets {
  models::Dataset train;
  models::Dataset validation;
};

/// Synthetic sets use `seed` for training and a derived seed for validation.
Datasets load_datasets(const RunConfig& cfg);
models::ClassifierConfig classifier_config(const RunConfig& cfg);
models::VaeConfig vae_config(const RunConfig& cfg);

struct AttributionSettings {
  attribution::GenerativeSpec generative;
  std::size_t bins = 50;
  std::size_t posterior_samples = 32;
  /// Attribute posterior-predictive rather than deterministic entropy for
  /// the non-Bayesian methods.
  bool posterior_entropy = false;
  std::uint64_t seed = 0;
};

AttributionSettings attribution_settings(const RunConfig& cfg);
uncertainty::PosteriorSamples posterior_samples(const models::Classifier& c, const AttributionSettings& s);

/// One named map per output: "" for single-map methods, or "full",
/// "aleatoric" and "epistemic" for the Bayesian method.
struct NamedMap {
  std::string part;
  attribution::AttributionMap map;
};

std::vector<NamedMap> attribute_image(Method method, const models::Classifier& c, const models::VaeModel& v,
                                      const diff::Tensor& x, const AttributionSettings& s,
                                      const uncertainty::PosteriorSamples& samples);

/// Whether a map meets the completeness budget max(0.05 H(x), 0.01).
bool completeness_ok(const attribution::AttributionMap& m);

/// Name of the map file part that evaluate reads for `method`.
std::string evaluated_part(Method method);

}  // namespace uattr::cli
