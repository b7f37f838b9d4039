#include "uattr/attribution/path.hpp"

#include <stdexcept>

namespace uattr::attribution {

namespace {

void check_bins(std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("path needs at least 2 bins");
}

Tensor row(const Tensor& m, std::size_t r) {
  const auto cols = m.cols();
  auto src = m.data().subspan(r * cols, cols);
  return Tensor({cols}, std::vector<double>(src.begin(), src.end()));
}

PathSegment straight_segment(const Tensor& from, const Tensor& to, std::size_t intervals) {
  const auto n = from.size();
  if (to.size() != n) throw diff::ShapeError("path endpoints differ in size");
  PathSegment s{Tensor({intervals + 1, n}), Tensor({intervals + 1, n}), 1.0 / static_cast<double>(intervals)};
  auto p = s.points.data();
  auto t = s.tangents.data();
  for (std::size_t k = 0; k <= intervals; ++k) {
    const double a = static_cast<double>(k) / static_cast<double>(intervals);
    for (std::size_t i = 0; i < n; ++i) {
      p[k * n + i] = k == intervals ? to[i] : from[i] + a * (to[i] - from[i]);
      t[k * n + i] = to[i] - from[i];
    }
  }
  return s;
}

}  // namespace

Tensor IntegrationPath::start() const { return row(segments.front().points, 0); }

Tensor IntegrationPath::end() const {
  const auto& last = segments.back().points;
  return row(last, last.rows() - 1);
}

std::vector<Tensor> IntegrationPath::points() const {
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (std::size_t k = s == 0 ? 0 : 1; k < segments[s].nodes(); ++k) out.push_back(row(segments[s].points, k));
  }
  return out;
}

IntegrationPath straight_path(const Tensor& x0, const Tensor& x, std::size_t bins) {
  check_bins(bins);
  IntegrationPath p;
  p.mode = PathMode::Straight;
  p.segments.push_back(straight_segment(x0, x, bins));
  return p;
}

IntegrationPath generative_path(const VaeModel& v, const Tensor& z0, const Tensor& z, const Tensor& x,
                                std::size_t bins, bool correction) {
  check_bins(bins);
  const auto m = v.latent_dim();
  if (z0.size() != m || z.size() != m) throw diff::ShapeError("latent endpoints have the wrong size");
  if (x.size() != v.input_dim()) throw diff::ShapeError("image size does not match the VAE");
  Tensor latents({bins + 1, m});
  Tensor direction({bins + 1, m});
  for (std::size_t k = 0; k <= bins; ++k) {
    const double a = static_cast<double>(k) / static_cast<double>(bins);
    for (std::size_t j = 0; j < m; ++j) {
      latents.data()[k * m + j] = k == bins ? z[j] : z0[j] + a * (z[j] - z0[j]);
      direction.data()[k * m + j] = z[j] - z0[j];
    }
  }
  diff::Graph g;
  const auto in = g.leaf("z");
  const auto h = v.decoder().build(g, in, false, "psi");
  g.set_output(h.output);
  diff::Bindings b;
  b.bind(in, latents);
  v.decoder().bind(b, h);
  diff::Evaluation e(g, b);

  IntegrationPath p;
  p.mode = PathMode::Generative;
  p.segments.push_back(PathSegment{e.output(), e.jvp(in, direction), 1.0 / static_cast<double>(bins)});
  if (correction) {
    const Tensor end = row(p.segments.front().points, bins);
    p.segments.push_back(straight_segment(end, x, (bins + 1) / 2));
  }
  return p;
}

std::vector<Tensor> path_points(const VaeModel& v, const Tensor& z0, const Tensor& z, const Tensor& x,
                                const PathSpec& spec) {
  if (spec.mode == PathMode::Straight) return straight_path(v.decode(z0), x, spec.bins).points();
  return generative_path(v, z0, z, x, spec.bins, spec.correction).points();
}

Tensor integrate_segment(const PathSegment& seg, const Tensor& g) {
  if (seg.nodes() < 2 || seg.tangents.shape() != seg.points.shape()) {
    throw diff::ShapeError("path segment points and tangents disagree");
  }
  if (g.shape() != seg.points.shape()) throw diff::ShapeError("gradient batch does not match the path points");
  const auto k = seg.nodes(), n = seg.points.cols();
  Tensor out({n});
  auto gd = g.data();
  auto td = seg.tangents.data();
  for (std::size_t r = 0; r < k; ++r) {
    const double w = (r == 0 || r + 1 == k ? 0.5 : 1.0) * seg.step;
    for (std::size_t i = 0; i < n; ++i) out[i] += w * gd[r * n + i] * td[r * n + i];
  }
  return out;
}

Tensor integrate_path(const IntegrationPath& path, const BatchGradient& gradient) {
  if (path.segments.empty()) throw std::invalid_argument("path has no segments");
  const auto n = path.segments.front().points.cols();
  Tensor out({n});
  for (const auto& seg : path.segments) {
    if (seg.points.cols() != n) throw diff::ShapeError("path segments differ in image size");
    const Tensor part = integrate_segment(seg, gradient(seg.points));
    for (std::size_t i = 0; i < n; ++i) out[i] += part[i];
  }
  return out;
}

}  // namespace uattr::attribution
