#pragma once

#include <cstdint>

#include "uattr/models/mlp.hpp"

namespace uattr::models {

/// Dense variational autoencoder: a shared encoder trunk feeding mean and
/// log-std heads, and a sigmoid decoder back to pixel space.
class VaeModel {
 public:
  VaeModel() = default;
  VaeModel(Mlp trunk, Mlp mean_head, Mlp log_std_head, Mlp decoder);

  /// Encoder n-hidden-(m,m), decoder m-hidden-n, Glorot initialised.
  static VaeModel initialized(std::size_t input_dim, std::size_t hidden, std::size_t latent_dim, std::uint64_t seed);

  std::size_t input_dim() const { return trunk_.input_dim(); }
  std::size_t latent_dim() const { return mean_head_.output_dim(); }

  const Mlp& trunk() const { return trunk_; }
  const Mlp& mean_head() const { return mean_head_; }
  const Mlp& log_std_head() const { return log_std_head_; }
  const Mlp& decoder() const { return decoder_; }
  Mlp& trunk() { return trunk_; }
  Mlp& mean_head() { return mean_head_; }
  Mlp& log_std_head() { return log_std_head_; }
  Mlp& decoder() { return decoder_; }

  std::vector<Tensor*> parameters();

  Tensor encode_mean(const Tensor& x) const;
  Tensor encode_log_std(const Tensor& x) const;
  /// Reparameterised latent draw mu + exp(log_std) * noise.
  Tensor sample_latent(const Tensor& x, const Tensor& noise) const;
  /// Single latent vector to a single image.
  Tensor decode(const Tensor& z) const;

 private:
  Mlp trunk_;
  Mlp mean_head_;
  Mlp log_std_head_;
  Mlp decoder_;
};

struct VaeLosses {
  double reconstruction = 0.0;  // binary cross-entropy summed over pixels
  double kl = 0.0;
};

/// Per-image losses for a given reparameterisation noise draw.
VaeLosses vae_losses(const VaeModel& v, const Tensor& x, const Tensor& noise);

/// Graph pieces for a batched VAE objective. `total` is the batch mean of
/// reconstruction + KL.
struct VaeLossGraph {
  Graph graph;
  NodeId input{};
  NodeId noise{};
  MlpHandles trunk, mean, log_std, decoder;
  NodeId reconstruction{};
  NodeId kl{};
  NodeId total{};
};

VaeLossGraph build_vae_loss_graph(const VaeModel& v);
void bind_vae(const VaeModel& v, const VaeLossGraph& lg, Bindings& b);

}  // namespace uattr::models
