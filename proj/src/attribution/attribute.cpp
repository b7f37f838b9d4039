#include "uattr/attribution/attribute.hpp"

#include <cmath>
#include <stdexcept>

namespace uattr::attribution {

namespace {

using diff::Graph;
using diff::NodeId;

void check_points(const Classifier& c, const Tensor& points) {
  if (points.rank() != 2 || points.cols() != c.input_dim()) {
    throw diff::ShapeError("expected [points, " + std::to_string(c.input_dim()) + "] images");
  }
}

NodeId negative_entropy_sum(Graph& g, NodeId probs) { return g.sum(g.mul(probs, g.log(probs))); }

Tensor as_points(const Tensor& x) { return models::as_row(x); }

double map_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

void finish(AttributionMap& m) { m.residual = std::fabs(m.total() - (m.f_input - m.f_fiducial)); }

}  // namespace

double AttributionMap::total() const { return map_sum(values); }

std::string fiducial_name(FiducialKind k) {
  switch (k) {
    case FiducialKind::Black: return "black";
    case FiducialKind::White: return "white";
    case FiducialKind::BlackWhite: return "black+white";
    case FiducialKind::Counterfactual: return "counterfactual";
  }
  return "unknown";
}

EntropyObjective::EntropyObjective(const Classifier& c, const PosteriorSamples* samples)
    : c_(&c), samples_(samples) {
  if (samples_ != nullptr && samples_->size() == 0) throw std::invalid_argument("posterior sample set is empty");
}

std::vector<double> EntropyObjective::values(const Tensor& points) const {
  check_points(*c_, points);
  std::vector<double> out;
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const auto src = points.data().subspan(r * points.cols(), points.cols());
    const Tensor x({points.cols()}, std::vector<double>(src.begin(), src.end()));
    out.push_back(samples_ == nullptr ? uncertainty::entropy(c_->predict(x))
                                      : uncertainty::entropy(uncertainty::posterior_predictive(*c_, x, *samples_)));
  }
  return out;
}

Tensor EntropyObjective::gradients(const Tensor& points) const {
  check_points(*c_, points);
  Graph g;
  const auto in = g.leaf("x");
  diff::Bindings b;
  b.bind(in, points);
  if (samples_ == nullptr) {
    const auto h = c_->network().build(g, in, false, "c");
    g.affine(negative_entropy_sum(g, h.output), -1.0, 0.0);
    c_->network().bind(b, h);
    return diff::Evaluation(g, b).backward({in})[0];
  }
  const auto stacked = uncertainty::stack_samples(*c_, *samples_, points.rows());
  const auto h = uncertainty::build_sampled(g, *c_, in);
  g.affine(negative_entropy_sum(g, h.mean), -1.0, 0.0);
  uncertainty::bind_sampled(b, *c_, h, stacked);
  return diff::Evaluation(g, b).backward({in})[0];
}

BayesianGradients bayesian_gradients(const Classifier& c, const PosteriorSamples& s, const Tensor& points) {
  check_points(c, points);
  const auto stacked = uncertainty::stack_samples(c, s, points.rows());
  Graph g;
  const auto in = g.leaf("x");
  const auto h = uncertainty::build_sampled(g, c, in);
  const auto k_full = g.leaf("coef.full");
  const auto k_ale = g.leaf("coef.aleatoric");
  const auto full = g.affine(g.sum(g.mul(h.mean, k_full)), -1.0, 0.0);
  const auto ale = g.affine(g.sum(g.mul(h.probs, k_ale)), -1.0, 0.0);
  g.add(full, ale);

  diff::Bindings b;
  b.bind(in, points);
  uncertainty::bind_sampled(b, c, h, stacked);

  Graph probe_graph;
  const auto probe_in = probe_graph.leaf("x");
  const auto probe = uncertainty::build_sampled(probe_graph, c, probe_in);
  probe_graph.add(probe_graph.sum(probe.mean), probe_graph.sum(probe.probs));
  diff::Bindings pb;
  pb.bind(probe_in, points);
  uncertainty::bind_sampled(pb, c, probe, stacked);
  const diff::Evaluation first(probe_graph, pb);

  auto coefficient = [](const Tensor& p, double scale) {
    Tensor k(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) k[i] = scale * (1.0 + std::log(std::max(p[i], diff::kLogFloor)));
    return k;
  };
  const Tensor kf = coefficient(first.value(probe.mean), 1.0);
  const Tensor ka = coefficient(first.value(probe.probs), 1.0 / static_cast<double>(s.size()));
  b.bind(k_full, kf);
  b.bind(k_ale, ka);
  const diff::Evaluation e(g, b);
  return BayesianGradients{e.backward(full, {in})[0], e.backward(ale, {in})[0]};
}

AttributionMap attribute_entropy(const Classifier& c, const IntegrationPath& path, const PosteriorSamples* samples) {
  const EntropyObjective f(c, samples);
  AttributionMap m;
  m.fiducial = "path";
  m.path_mode = path.mode;
  m.values = integrate_path(path, [&](const Tensor& pts) { return f.gradients(pts); });
  m.f_input = f.values(as_points(path.end()))[0];
  m.f_fiducial = f.values(as_points(path.start()))[0];
  finish(m);
  return m;
}

BayesianMaps attribute_bayesian(const Classifier& c, const IntegrationPath& path, const PosteriorSamples& s) {
  if (path.segments.empty()) throw std::invalid_argument("path has no segments");
  const auto n = path.segments.front().points.cols();
  BayesianMaps out;
  out.full.values = Tensor({n});
  out.aleatoric.values = Tensor({n});
  for (const auto& seg : path.segments) {
    if (seg.points.cols() != n) throw diff::ShapeError("path segments differ in image size");
    const auto g = bayesian_gradients(c, s, seg.points);
    const Tensor full = integrate_segment(seg, g.full);
    const Tensor ale = integrate_segment(seg, g.aleatoric);
    for (std::size_t i = 0; i < n; ++i) {
      out.full.values[i] += full[i];
      out.aleatoric.values[i] += ale[i];
    }
  }
  out.epistemic.values = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) out.epistemic.values[i] = out.full.values[i] - out.aleatoric.values[i];

  const auto end = uncertainty::decompose(c, path.end(), s);
  const auto start = uncertainty::decompose(c, path.start(), s);
  out.full.f_input = end.total;
  out.full.f_fiducial = start.total;
  out.aleatoric.f_input = end.aleatoric;
  out.aleatoric.f_fiducial = start.aleatoric;
  out.epistemic.f_input = end.epistemic;
  out.epistemic.f_fiducial = start.epistemic;
  for (auto* m : {&out.full, &out.aleatoric, &out.epistemic}) {
    m->fiducial = "path";
    m->path_mode = path.mode;
    finish(*m);
  }
  return out;
}

AttributionMap ig_attribute(const Classifier& c, const Tensor& x, const FiducialSpec& fiducial, std::size_t bins,
                            const PosteriorSamples* samples, const VaeModel* vae) {
  if (x.size() != c.input_dim()) throw diff::ShapeError("image size does not match the classifier");
  const auto n = x.size();
  AttributionMap m;
  switch (fiducial.kind) {
    case FiducialKind::Black:
    case FiducialKind::White:
      m = attribute_entropy(c, straight_path(Tensor({n}, fiducial.kind == FiducialKind::White ? 1.0 : 0.0), x, bins),
                            samples);
      break;
    case FiducialKind::BlackWhite: {
      const auto black = attribute_entropy(c, straight_path(Tensor({n}, 0.0), x, bins), samples);
      const auto white = attribute_entropy(c, straight_path(Tensor({n}, 1.0), x, bins), samples);
      m.values = Tensor({n});
      for (std::size_t i = 0; i < n; ++i) m.values[i] = 0.5 * (black.values[i] + white.values[i]);
      m.f_input = black.f_input;
      m.f_fiducial = 0.5 * (black.f_fiducial + white.f_fiducial);
      break;
    }
    case FiducialKind::Counterfactual: {
      if (vae == nullptr) throw std::invalid_argument("counterfactual fiducial needs a VAE");
      auto cf = find_counterfactual_fiducial(c, *vae, x, fiducial);
      m = attribute_entropy(c, straight_path(vae->decode(cf.z0), x, bins), samples);
      m.counterfactual = std::move(cf);
      break;
    }
  }
  m.fiducial = fiducial_name(fiducial.kind);
  m.path_mode = PathMode::Straight;
  finish(m);
  return m;
}

GenerativePlan plan_generative(const Classifier& c, const VaeModel& v, const Tensor& x, const GenerativeSpec& spec) {
  if (x.size() != c.input_dim() || x.size() != v.input_dim()) {
    throw diff::ShapeError("image size does not match the models");
  }
  GenerativePlan p;
  p.counterfactual = find_counterfactual_fiducial(c, v, x, spec.fiducial);
  p.reconstruction = find_reconstruction(v, x, spec.reconstruction);
  if (spec.path.mode == PathMode::Generative) {
    p.path = generative_path(v, p.counterfactual.z0, p.reconstruction.z, x, spec.path.bins, spec.path.correction);
  } else {
    p.path = straight_path(v.decode(p.counterfactual.z0), x, spec.path.bins);
  }
  return p;
}

AttributionMap generative_attribute(const Classifier& c, const VaeModel& v, const Tensor& x,
                                    const GenerativeSpec& spec, const PosteriorSamples* samples) {
  auto plan = plan_generative(c, v, x, spec);
  auto m = attribute_entropy(c, plan.path, samples);
  m.fiducial = fiducial_name(FiducialKind::Counterfactual);
  m.counterfactual = std::move(plan.counterfactual);
  return m;
}

BayesianMaps bayesian_generative_attribute(const Classifier& c, const VaeModel& v, const Tensor& x,
                                           const GenerativeSpec& spec, const PosteriorSamples& s) {
  auto plan = plan_generative(c, v, x, spec);
  auto maps = attribute_bayesian(c, plan.path, s);
  for (auto* m : {&maps.full, &maps.aleatoric, &maps.epistemic}) {
    m->fiducial = fiducial_name(FiducialKind::Counterfactual);
    m->counterfactual = plan.counterfactual;
  }
  return maps;
}

}  // namespace uattr::attribution
