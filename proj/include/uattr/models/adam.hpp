#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uattr/diffcore/tensor.hpp"

namespace uattr::models {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates; sized lazily on the first step.
struct AdamState {
  std::vector<diff::Tensor> first;
  std::vector<diff::Tensor> second;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter in place.
void adam_step(std::span<diff::Tensor* const> params, std::span<const diff::Tensor> grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace uattr::models
