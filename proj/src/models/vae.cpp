#include "uattr/models/vae.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace uattr::models {

VaeModel::VaeModel(Mlp trunk, Mlp mean_head, Mlp log_std_head, Mlp decoder)
    : trunk_(std::move(trunk)),
      mean_head_(std::move(mean_head)),
      log_std_head_(std::move(log_std_head)),
      decoder_(std::move(decoder)) {
  if (trunk_.output_dim() != mean_head_.input_dim() || trunk_.output_dim() != log_std_head_.input_dim()) {
    throw std::invalid_argument("encoder heads do not match the trunk width");
  }
  if (mean_head_.output_dim() != log_std_head_.output_dim() || decoder_.input_dim() != mean_head_.output_dim()) {
    throw std::invalid_argument("latent dimensions disagree between encoder and decoder");
  }
  if (decoder_.output_dim() != trunk_.input_dim()) {
    throw std::invalid_argument("decoder output must match the encoder input");
  }
}

VaeModel VaeModel::initialized(std::size_t input_dim, std::size_t hidden, std::size_t latent_dim, std::uint64_t seed) {
  if (latent_dim < 1) throw std::invalid_argument("latent dimension must be positive");
  Rng rng(seed);
  auto trunk = Mlp::glorot({input_dim, hidden}, Activation::Relu, Activation::Relu, rng);
  auto mean = Mlp::glorot({hidden, latent_dim}, Activation::Identity, Activation::Identity, rng);
  auto log_std = Mlp::glorot({hidden, latent_dim}, Activation::Identity, Activation::Identity, rng);
  auto decoder = Mlp::glorot({latent_dim, hidden, input_dim}, Activation::Relu, Activation::Sigmoid, rng);
  return VaeModel(std::move(trunk), std::move(mean), std::move(log_std), std::move(decoder));
}

std::vector<Tensor*> VaeModel::parameters() {
  std::vector<Tensor*> p;
  for (Mlp* m : {&trunk_, &mean_head_, &log_std_head_, &decoder_}) {
    auto mp = m->parameters();
    p.insert(p.end(), mp.begin(), mp.end());
  }
  return p;
}

Tensor VaeModel::encode_mean(const Tensor& x) const {
  return mean_head_.forward(trunk_.forward(as_row(x))).reshaped({latent_dim()});
}

Tensor VaeModel::encode_log_std(const Tensor& x) const {
  return log_std_head_.forward(trunk_.forward(as_row(x))).reshaped({latent_dim()});
}

Tensor VaeModel::sample_latent(const Tensor& x, const Tensor& noise) const {
  const Tensor h = trunk_.forward(as_row(x));
  const Tensor mu = mean_head_.forward(h);
  const Tensor ls = log_std_head_.forward(h);
  if (noise.size() != latent_dim()) throw diff::ShapeError("noise must have latent_dim entries");
  Tensor z({latent_dim()});
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = mu[j] + std::exp(ls[j]) * noise[j];
  return z;
}

Tensor VaeModel::decode(const Tensor& z) const {
  if (z.size() != latent_dim()) throw diff::ShapeError("latent vector has the wrong size");
  return decoder_.forward(as_row(z)).reshaped({input_dim()});
}

VaeLossGraph build_vae_loss_graph(const VaeModel& v) {
  VaeLossGraph lg;
  Graph& g = lg.graph;
  lg.input = g.leaf("x");
  lg.noise = g.leaf("noise");
  lg.trunk = v.trunk().build(g, lg.input, false, "enc");
  lg.mean = v.mean_head().build(g, lg.trunk.output, false, "mu");
  lg.log_std = v.log_std_head().build(g, lg.trunk.output, false, "logstd");
  const NodeId mu = lg.mean.output;
  const NodeId ls = lg.log_std.output;
  const NodeId z = g.add(mu, g.mul(g.exp(ls), lg.noise));
  lg.decoder = v.decoder().build(g, z, false, "dec");
  const NodeId xr = lg.decoder.output;

  const double n = static_cast<double>(v.input_dim());
  const double m = static_cast<double>(v.latent_dim());
  // Means over batch*dims rescaled by dims give per-image sums averaged over the batch.
  const NodeId log_p = g.log(xr);
  const NodeId log_q = g.log(g.affine(xr, -1.0, 1.0));
  const NodeId ll = g.add(g.mul(lg.input, log_p), g.mul(g.affine(lg.input, -1.0, 1.0), log_q));
  lg.reconstruction = g.affine(g.mean(ll), -n, 0.0);

  const NodeId kl_terms = g.add(g.add(g.mul(mu, mu), g.exp(g.affine(ls, 2.0, 0.0))), g.affine(ls, -2.0, -1.0));
  lg.kl = g.affine(g.mean(kl_terms), 0.5 * m, 0.0);
  lg.total = g.add(lg.reconstruction, lg.kl);
  g.set_output(lg.total);
  return lg;
}

void bind_vae(const VaeModel& v, const VaeLossGraph& lg, Bindings& b) {
  v.trunk().bind(b, lg.trunk);
  v.mean_head().bind(b, lg.mean);
  v.log_std_head().bind(b, lg.log_std);
  v.decoder().bind(b, lg.decoder);
}

VaeLosses vae_losses(const VaeModel& v, const Tensor& x, const Tensor& noise) {
  if (x.size() != v.input_dim()) throw diff::ShapeError("image size does not match the VAE input");
  if (noise.size() != v.latent_dim()) throw diff::ShapeError("noise size does not match the latent dimension");
  auto lg = build_vae_loss_graph(v);
  Bindings b;
  const Tensor xr = as_row(x);
  const Tensor nr = as_row(noise);
  b.bind(lg.input, xr);
  b.bind(lg.noise, nr);
  bind_vae(v, lg, b);
  diff::Evaluation eval(lg.graph, b);
  return VaeLosses{eval.value(lg.reconstruction)[0], eval.value(lg.kl)[0]};
}

}  // namespace uattr::models
