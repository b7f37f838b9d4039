#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "uattr/models/classifier.hpp"
#include "uattr/models/dataset.hpp"
#include "uattr/models/vae.hpp"

namespace uattr::models {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct ClassifierConfig : TrainConfig {
  std::vector<std::size_t> hidden = {128};
  double dropout_rate = 0.5;
};

struct VaeConfig : TrainConfig {
  std::size_t hidden = 256;
  std::size_t latent_dim = 16;

  VaeConfig() { epochs = 50; }
};

template <class Model>
struct Trained {
  Model model;
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

/// Minibatch Adam on mean categorical cross-entropy with dropout active.
/// Weights come from Classifier::initialized(sizes, rate, cfg.seed); the
/// shuffle order and dropout masks from a separate stream of the same seed.
Trained<Classifier> train_classifier(const Dataset& data, const ClassifierConfig& cfg);

/// Minibatch Adam on binary cross-entropy + KL, averaged over the batch.
Trained<VaeModel> train_vae(const Dataset& data, const VaeConfig& cfg);

double accuracy(const Classifier& c, const Dataset& data);

}  // namespace uattr::models
