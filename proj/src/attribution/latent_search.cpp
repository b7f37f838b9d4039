#include "uattr/attribution/latent_search.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "uattr/models/adam.hpp"
#include "uattr/uncertainty/uncertainty.hpp"

namespace uattr::attribution {

namespace {

using diff::Graph;
using diff::NodeId;

struct SearchGraph {
  Graph g;
  NodeId z{};
  models::MlpHandles decoder;
  models::MlpHandles classifier;
  NodeId probs{};
  NodeId distance{};
  NodeId loss{};
  bool has_classifier = false;
};

SearchGraph build_search(const Mlp& decoder, const Classifier* c, const Tensor& x, std::size_t target, double penalty,
                         Distance d) {
  SearchGraph s;
  auto& g = s.g;
  s.z = g.leaf("z");
  s.decoder = decoder.build(g, s.z, false, "psi");
  const auto image = s.decoder.output;
  const auto diff = g.sub(image, g.constant(models::as_row(x), "x"));
  s.distance = d == Distance::MeanAbsolute ? g.mean(g.abs(diff)) : g.sum(g.mul(diff, diff));
  const double m = static_cast<double>(decoder.input_dim());
  const auto prior = g.affine(g.sum(g.mul(s.z, s.z)), 1.0 / (2.0 * m), 0.0);
  auto loss = g.add(s.distance, prior);
  if (c != nullptr) {
    s.has_classifier = true;
    s.classifier = c->network().build(g, image, false, "f");
    s.probs = s.classifier.output;
    Tensor select({c->num_classes()});
    select[target] = 1.0;
    const auto p_target = g.sum(g.mul(s.probs, g.constant(std::move(select), "onehot")));
    loss = g.add(loss, g.affine(g.log(p_target), -penalty, 0.0));
  }
  s.loss = loss;
  g.set_output(loss);
  return s;
}

void check_latent(const Mlp& decoder, const Tensor& x, const Tensor& z) {
  if (z.size() != decoder.input_dim()) throw diff::ShapeError("latent vector has the wrong size");
  if (x.size() != decoder.output_dim()) throw diff::ShapeError("image size does not match the decoder output");
}

diff::Evaluation evaluate(const SearchGraph& s, const Mlp& decoder, const Classifier* c, const Tensor& z_row) {
  diff::Bindings b;
  b.bind(s.z, z_row);
  decoder.bind(b, s.decoder);
  if (c != nullptr) c->network().bind(b, s.classifier);
  try {
    return diff::Evaluation(s.g, b);
  } catch (const diff::NonFiniteError& e) {
    throw DivergenceError(std::string("latent search diverged: ") + e.what());
  }
}

// Runs Adam from `z_row`, calling visit(z_row, evaluation, loss) on every
// iterate including the start. Returns {iterations, converged}.
template <class Visit>
std::pair<std::size_t, bool> descend(const SearchGraph& s, const Mlp& decoder, const Classifier* c, Tensor z_row,
                                     const DescentConfig& cfg, Visit&& visit) {
  if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (cfg.window == 0) throw std::invalid_argument("convergence window must be positive");
  models::AdamState state;
  const models::AdamConfig adam{cfg.learning_rate};
  std::vector<double> history;
  for (std::size_t t = 0;; ++t) {
    auto e = evaluate(s, decoder, c, z_row);
    const double loss = e.output()[0];
    visit(z_row, e, loss);
    history.push_back(loss);
    if (t >= cfg.window) {
      const double before = history[t - cfg.window];
      if (std::fabs(loss - before) < cfg.tolerance * std::fabs(before)) return {t, true};
    }
    if (t == cfg.max_iterations) return {t, false};
    auto grads = e.backward({s.z});
    Tensor* params[] = {&z_row};
    models::adam_step(params, grads, state, adam);
    if (!z_row.all_finite()) throw DivergenceError("latent search produced a non-finite latent vector");
  }
}

}  // namespace

double reconstruction_loss(const Mlp& decoder, const Tensor& x, const Tensor& z, Distance d) {
  check_latent(decoder, x, z);
  auto s = build_search(decoder, nullptr, x, 0, 0.0, d);
  const Tensor row = models::as_row(z);
  return evaluate(s, decoder, nullptr, row).output()[0];
}

double counterfactual_loss(const Classifier& c, const Mlp& decoder, const Tensor& x, const Tensor& z0,
                           std::size_t target_class, double penalty, Distance d) {
  check_latent(decoder, x, z0);
  if (target_class >= c.num_classes()) throw std::invalid_argument("target class out of range");
  auto s = build_search(decoder, &c, x, target_class, penalty, d);
  const Tensor row = models::as_row(z0);
  return evaluate(s, decoder, &c, row).output()[0];
}

ReconstructionResult find_reconstruction(const Mlp& decoder, const Tensor& x, const Tensor& start,
                                         const DescentConfig& cfg) {
  check_latent(decoder, x, start);
  auto s = build_search(decoder, nullptr, x, 0, 0.0, cfg.distance);
  ReconstructionResult r;
  bool first = true;
  auto [iterations, converged] =
      descend(s, decoder, nullptr, models::as_row(start), cfg, [&](const Tensor& z, const diff::Evaluation& e, double loss) {
        const double d = e.value(s.distance)[0];
        if (first) {
          r.start_distance = d;
          first = false;
        } else if (d > r.start_distance || loss >= r.loss) {
          return;
        }
        r.z = z.reshaped({z.size()});
        r.loss = loss;
        r.distance = d;
      });
  r.iterations = iterations;
  r.converged = converged;
  return r;
}

ReconstructionResult find_reconstruction(const VaeModel& v, const Tensor& x, const DescentConfig& cfg) {
  return find_reconstruction(v.decoder(), x, v.encode_mean(x), cfg);
}

CounterfactualResult find_counterfactual_fiducial(const Classifier& c, const VaeModel& v, const Tensor& x,
                                                  const FiducialSpec& spec) {
  if (!(spec.penalty >= 0.0)) throw std::invalid_argument("penalty must be non-negative");
  if (!(spec.entropy_target > 0.0)) throw std::invalid_argument("entropy target must be positive");
  const auto& decoder = v.decoder();
  const Tensor start = v.encode_mean(x);
  check_latent(decoder, x, start);
  const std::size_t target = models::argmax(c.predict(x));
  auto s = build_search(decoder, &c, x, target, spec.penalty, spec.descent.distance);

  CounterfactualResult best_feasible, lowest_entropy;
  bool have_feasible = false, have_any = false;
  auto [iterations, converged] =
      descend(s, decoder, &c, models::as_row(start), spec.descent,
              [&](const Tensor& z, const diff::Evaluation& e, double loss) {
                const Tensor& p = e.value(s.probs);
                const double h = uncertainty::entropy(p);
                const std::size_t cls = models::argmax(p);
                const bool feasible = cls == target && h <= spec.entropy_target;
                auto record = [&](CounterfactualResult& r) {
                  r.z0 = z.reshaped({z.size()});
                  r.loss = loss;
                  r.entropy = h;
                  r.predicted_class = cls;
                };
                if (feasible && (!have_feasible || loss < best_feasible.loss)) {
                  record(best_feasible);
                  have_feasible = true;
                }
                // Preserving the class ranks ahead of lower entropy.
                const bool better = !have_any ||
                                    (cls == target) > (lowest_entropy.predicted_class == target) ||
                                    ((cls == target) == (lowest_entropy.predicted_class == target) &&
                                     h < lowest_entropy.entropy);
                if (better) {
                  record(lowest_entropy);
                  have_any = true;
                }
              });
  (void)converged;
  CounterfactualResult r = have_feasible ? best_feasible : lowest_entropy;
  r.target_class = target;
  r.iterations = iterations;
  r.target_missed = !have_feasible;
  return r;
}

}  // namespace uattr::attribution
