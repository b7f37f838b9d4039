#include "uattr/models/adam.hpp"

#include <cmath>

#include "uattr/diffcore/graph.hpp"

namespace uattr::models {

void adam_step(std::span<diff::Tensor* const> params, std::span<const diff::Tensor> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw diff::ShapeError("adam: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw diff::ShapeError("adam: gradient " + std::to_string(i) + " has shape " +
                             diff::shape_string(grads[i].shape()) + ", parameter has " +
                             diff::shape_string(params[i]->shape()));
    }
  }
  if (state.first.empty()) {
    for (auto* p : params) {
      state.first.emplace_back(p->shape());
      state.second.emplace_back(p->shape());
    }
  } else if (state.first.size() != params.size()) {
    throw diff::ShapeError("adam: state was created for a different parameter set");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace uattr::models
