#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "uattr/models/vae.hpp"

namespace uattr::attribution {

using diff::Tensor;
using models::VaeModel;

enum class PathMode : std::uint8_t { Straight, Generative };

struct PathSpec {
  PathMode mode = PathMode::Generative;
  std::size_t bins = 50;
  bool correction = true;
};

/// Uniform trapezoid grid on one smooth piece of the path: `points` is
/// [nodes, n] and `tangents` [nodes, n] holds d(delta)/d(alpha) at each node.
struct PathSegment {
  Tensor points;
  Tensor tangents;
  double step = 0.0;

  std::size_t nodes() const { return points.rows(); }
};

struct IntegrationPath {
  std::vector<PathSegment> segments;
  PathMode mode = PathMode::Straight;

  Tensor start() const;
  Tensor end() const;
  /// All nodes in order, with the shared node between segments listed once.
  std::vector<Tensor> points() const;
};

/// x0 -> x with `bins` intervals.
IntegrationPath straight_path(const Tensor& x0, const Tensor& x, std::size_t bins);

/// psi(z0 + a (z - z0)) for a = k/bins, tangents by forward-mode derivative
/// of the decoder along z - z0; then, if `correction`, a straight segment
/// psi(z) -> x on ceil(bins/2) intervals.
IntegrationPath generative_path(const VaeModel& v, const Tensor& z0, const Tensor& z, const Tensor& x,
                                std::size_t bins, bool correction = true);

/// Ordered images along the path described by `spec`. Straight mode reads
/// x0 = psi(z0).
std::vector<Tensor> path_points(const VaeModel& v, const Tensor& z0, const Tensor& z, const Tensor& x,
                                const PathSpec& spec);

/// Rows of gradients for a batch of images given as rows.
using BatchGradient = std::function<Tensor(const Tensor& points)>;

/// Trapezoid rule on one segment given gradient rows at its nodes.
Tensor integrate_segment(const PathSegment& segment, const Tensor& gradients);

/// sum over segments of the trapezoid rule applied to g(delta) * d(delta)/d(alpha).
Tensor integrate_path(const IntegrationPath& path, const BatchGradient& gradient);

}  // namespace uattr::attribution
