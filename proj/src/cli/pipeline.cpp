#include "uattr/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "uattr/cli/datasets.hpp"

namespace uattr::cli {

namespace {

constexpr std::uint64_t kValidationSeedMix = 0x5bd1e9955bd1e995ULL;
constexpr std::uint64_t kPosteriorSeedMix = 0x2545f4914f6cdd1dULL;

}  // namespace

Method parse_method(const std::string& name) {
  for (auto m : all_methods()) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name +
                    "' (expected ig-black, ig-white, ig-bw, ig-counterfactual, generative or bayesian-generative)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::IgBlack: return "ig-black";
    case Method::IgWhite: return "ig-white";
    case Method::IgBlackWhite: return "ig-bw";
    case Method::IgCounterfactual: return "ig-counterfactual";
    case Method::Generative: return "generative";
    case Method::BayesianGenerative: return "bayesian-generative";
  }
  return "unknown";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::IgBlack,          Method::IgWhite,    Method::IgBlackWhite,
                                     Method::IgCounterfactual, Method::Generative, Method::BayesianGenerative};
  return m;
}

Datasets load_datasets(const RunConfig& cfg) {
  const auto kind = cfg.str("dataset");
  Datasets d;
  if (kind == "synthetic") {
    const auto seed = cfg.u64("seed");
    const auto train = cfg.count("train_count"), val = cfg.count("val_count");
    if (train == 0 || val == 0) throw ConfigError("train_count and val_count must be at least 1");
    d.train = gen_synthetic(seed, train, models::Split::Train);
    d.validation = gen_synthetic(seed ^ kValidationSeedMix, val, models::Split::Validation);
  } else if (kind == "idx") {
    const auto ti = cfg.str("train_images"), tl = cfg.str("train_labels");
    const auto vi = cfg.str("val_images"), vl = cfg.str("val_labels");
    if (ti.empty() || tl.empty() || vi.empty() || vl.empty()) {
      throw ConfigError("dataset=idx needs train_images, train_labels, val_images and val_labels");
    }
    d.train = ingest_idx(ti, tl, models::Split::Train);
    d.validation = ingest_idx(vi, vl, models::Split::Validation);
    d.validation.num_classes = d.train.num_classes = std::max(d.train.num_classes, d.validation.num_classes);
  } else {
    throw ConfigError("dataset must be 'synthetic' or 'idx', got '" + kind + "'");
  }
  return d;
}

models::ClassifierConfig classifier_config(const RunConfig& cfg) {
  models::ClassifierConfig c;
  c.hidden = cfg.counts("classifier_hidden");
  if (c.hidden.empty()) throw ConfigError("classifier_hidden needs at least one width");
  c.dropout_rate = cfg.real("dropout");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  c.epochs = cfg.count("classifier_epochs");
  c.learning_rate = cfg.real("classifier_lr");
  c.batch_size = cfg.count("batch_size");
  c.seed = cfg.u64("seed");
  return c;
}

models::VaeConfig vae_config(const RunConfig& cfg) {
  models::VaeConfig c;
  c.hidden = cfg.count("vae_hidden");
  c.latent_dim = cfg.count("latent_dim");
  if (c.latent_dim < 2) throw ConfigError("latent_dim must be at least 2");
  c.epochs = cfg.count("vae_epochs");
  c.learning_rate = cfg.real("vae_lr");
  c.batch_size = cfg.count("batch_size");
  c.seed = cfg.u64("seed");
  return c;
}

AttributionSettings attribution_settings(const RunConfig& cfg) {
  AttributionSettings s;
  auto& fid = s.generative.fiducial;
  fid.kind = attribution::FiducialKind::Counterfactual;
  fid.penalty = cfg.real("penalty");
  fid.entropy_target = cfg.real("entropy_target");
  fid.descent.learning_rate = cfg.real("fiducial_lr");
  fid.descent.max_iterations = cfg.count("max_iterations");
  fid.descent.tolerance = cfg.real("tolerance");
  if (!(fid.penalty > 0.0)) throw ConfigError("penalty must be positive");
  if (!(fid.entropy_target > 0.0)) throw ConfigError("entropy_target must be positive");
  if (!(fid.descent.learning_rate > 0.0)) throw ConfigError("fiducial_lr must be positive");
  s.generative.reconstruction = fid.descent;
  s.bins = cfg.count("bins");
  if (s.bins < 2) throw ConfigError("bins must be at least 2");
  s.generative.path.bins = s.bins;
  s.posterior_samples = cfg.count("posterior_samples");
  if (s.posterior_samples == 0) throw ConfigError("posterior_samples must be at least 1");
  s.posterior_entropy = cfg.flag("posterior_entropy");
  s.seed = cfg.u64("seed");
  return s;
}

uncertainty::PosteriorSamples posterior_samples(const models::Classifier& c, const AttributionSettings& s) {
  return uncertainty::draw_posterior_samples(c, s.posterior_samples, s.seed ^ kPosteriorSeedMix);
}

std::vector<NamedMap> attribute_image(Method method, const models::Classifier& c, const models::VaeModel& v,
                                      const diff::Tensor& x, const AttributionSettings& s,
                                      const uncertainty::PosteriorSamples& samples) {
  using namespace attribution;
  const PosteriorSamples* f_samples = s.posterior_entropy ? &samples : nullptr;
  auto fid = s.generative.fiducial;
  auto ig = [&](FiducialKind kind) {
    fid.kind = kind;
    return std::vector<NamedMap>{{"", ig_attribute(c, x, fid, s.bins, f_samples, &v)}};
  };
  switch (method) {
    case Method::IgBlack: return ig(FiducialKind::Black);
    case Method::IgWhite: return ig(FiducialKind::White);
    case Method::IgBlackWhite: return ig(FiducialKind::BlackWhite);
    case Method::IgCounterfactual: return ig(FiducialKind::Counterfactual);
    case Method::Generative: return {{"", generative_attribute(c, v, x, s.generative, f_samples)}};
    case Method::BayesianGenerative: {
      auto maps = bayesian_generative_attribute(c, v, x, s.generative, samples);
      return {{"full", std::move(maps.full)},
              {"aleatoric", std::move(maps.aleatoric)},
              {"epistemic", std::move(maps.epistemic)}};
    }
  }
  return {};
}

bool completeness_ok(const attribution::AttributionMap& m) {
  return m.residual <= std::max(0.05 * m.f_input, 0.01);
}

std::string evaluated_part(Method method) { return method == Method::BayesianGenerative ? "full" : ""; }

}  // namespace uattr::cli
