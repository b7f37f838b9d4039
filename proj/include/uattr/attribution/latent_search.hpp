#pragma once

#include <cstdint>
#include <stdexcept>

#include "uattr/models/classifier.hpp"
#include "uattr/models/vae.hpp"

namespace uattr::attribution {

using diff::Tensor;
using models::Classifier;
using models::Mlp;
using models::VaeModel;

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Distance : std::uint8_t {
  MeanAbsolute,  // mean_i |a_i - b_i|
  SquaredError,  // sum_i (a_i - b_i)^2
};

/// Adam descent on a latent vector. Stops after `max_iterations` or once
/// |L_t - L_{t-window}| < tolerance * |L_{t-window}|.
struct DescentConfig {
  double learning_rate = 0.05;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-5;
  std::size_t window = 10;
  Distance distance = Distance::MeanAbsolute;
};

enum class FiducialKind : std::uint8_t { Black, White, BlackWhite, Counterfactual };

struct FiducialSpec {
  FiducialKind kind = FiducialKind::Black;
  double penalty = 100.0;
  double entropy_target = 0.05;
  DescentConfig descent{};
};

struct ReconstructionResult {
  Tensor z;
  double loss = 0.0;      // d + prior at z
  double distance = 0.0;  // d(psi(z), x)
  double start_distance = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Minimises d(psi(z), x) + (1/2m) sum z_j^2 from `start`. Among the
/// iterates whose distance does not exceed the start's, the lowest loss wins.
ReconstructionResult find_reconstruction(const Mlp& decoder, const Tensor& x, const Tensor& start,
                                         const DescentConfig& cfg);
/// Same, with psi the VAE decoder and start phi_mu(x).
ReconstructionResult find_reconstruction(const VaeModel& v, const Tensor& x, const DescentConfig& cfg);

struct CounterfactualResult {
  Tensor z0;
  double loss = 0.0;
  double entropy = 0.0;  // entropy of f(psi(z0))
  std::size_t target_class = 0;
  std::size_t predicted_class = 0;
  std::size_t iterations = 0;
  bool target_missed = false;
};

/// Latent fiducial with low predictive entropy and the same predicted class
/// as x, via descent on d(psi(z0), x) + (1/2m) sum z0_j^2 - lambda log f_c(psi(z0)).
/// Returns the lowest-loss iterate meeting the entropy target with the class
/// preserved; otherwise the lowest-entropy iterate, flagged target_missed.
CounterfactualResult find_counterfactual_fiducial(const Classifier& c, const VaeModel& v, const Tensor& x,
                                                  const FiducialSpec& spec);

double reconstruction_loss(const Mlp& decoder, const Tensor& x, const Tensor& z, Distance d);
double counterfactual_loss(const Classifier& c, const Mlp& decoder, const Tensor& x, const Tensor& z0,
                           std::size_t target_class, double penalty, Distance d);

}  // namespace uattr::attribution
