#include "uattr/models/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uattr/models/adam.hpp"

namespace uattr::models {

namespace {

constexpr std::uint64_t kTrainStream = 0x9e3779b97f4a7c15ULL;

void check_dataset(const Dataset& data, std::size_t expected_inputs) {
  if (data.empty()) throw TrainingError("training set is empty");
  if (data.pixel_count() != expected_inputs && expected_inputs != 0) {
    throw TrainingError("dataset images do not match the model input size");
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with an explicit uniform draw: std::shuffle's use of the
  // engine is implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

template <class F>
void for_each_batch(const std::vector<std::size_t>& order, std::size_t batch_size, F&& fn) {
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto end = std::min(order.size(), start + batch_size);
    fn(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                order.begin() + static_cast<std::ptrdiff_t>(end)));
  }
}

Tensor gather(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<const Tensor*> rows;
  rows.reserve(idx.size());
  for (auto i : idx) rows.push_back(&data.images[i]);
  return stack_rows(rows);
}

}  // namespace

Trained<Classifier> train_classifier(const Dataset& data, const ClassifierConfig& cfg) {
  check_dataset(data, 0);
  if (cfg.batch_size == 0) throw TrainingError("batch size must be positive");
  std::vector<std::size_t> sizes{data.pixel_count()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(data.num_classes);
  Trained<Classifier> out{Classifier::initialized(sizes, cfg.dropout_rate, cfg.seed), {}};
  Classifier& model = out.model;

  Graph g;
  const NodeId x = g.leaf("x");
  const NodeId y = g.leaf("onehot");
  const MlpHandles h = model.network().build(g, x, true, "c");
  // -mean(onehot * log p) * classes == mean over the batch of the cross-entropy.
  const NodeId loss = g.affine(g.mean(g.mul(y, g.log(h.output))), -static_cast<double>(data.num_classes), 0.0);
  g.set_output(loss);

  const auto params_nodes = model.network().parameter_nodes(h);
  const auto params = model.network().parameters();
  const auto widths = model.hidden_widths();
  AdamState state;
  const AdamConfig adam{cfg.learning_rate};
  Rng rng(cfg.seed ^ kTrainStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 - cfg.dropout_rate;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for_each_batch(order, cfg.batch_size, [&](const std::vector<std::size_t>& idx) {
      const Tensor xb = gather(data, idx);
      Tensor yb({idx.size(), data.num_classes});
      for (std::size_t r = 0; r < idx.size(); ++r) yb.at(r, static_cast<std::size_t>(data.labels[idx[r]])) = 1.0;
      std::vector<Tensor> masks;
      for (auto w : widths) {
        Tensor m({idx.size(), w});
        for (auto& v : m.data()) v = unit(rng) < keep ? 1.0 / keep : 0.0;
        masks.push_back(std::move(m));
      }
      Bindings b;
      b.bind(x, xb);
      b.bind(y, yb);
      model.network().bind(b, h);
      for (std::size_t i = 0; i < masks.size(); ++i) b.bind(h.masks[i], masks[i]);
      try {
        diff::Evaluation eval(g, b);
        const double value = eval.output()[0];
        if (!std::isfinite(value)) throw diff::NonFiniteError("loss is not finite");
        auto grads = eval.backward(params_nodes);
        adam_step(params, grads, state, adam);
        loss_sum += value;
        ++batches;
      } catch (const diff::NonFiniteError& e) {
        throw TrainingError("classifier training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batches + 1) + ": " + e.what());
      }
    });
    out.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  return out;
}

Trained<VaeModel> train_vae(const Dataset& data, const VaeConfig& cfg) {
  check_dataset(data, 0);
  if (cfg.latent_dim < 2) throw TrainingError("latent dimension must be at least 2");
  if (cfg.batch_size == 0) throw TrainingError("batch size must be positive");
  Trained<VaeModel> out{VaeModel::initialized(data.pixel_count(), cfg.hidden, cfg.latent_dim, cfg.seed), {}};
  VaeModel& model = out.model;

  auto lg = build_vae_loss_graph(model);
  std::vector<NodeId> nodes;
  for (const auto* hm : {&lg.trunk, &lg.mean, &lg.log_std, &lg.decoder}) {
    for (std::size_t i = 0; i < hm->weights.size(); ++i) {
      nodes.push_back(hm->weights[i]);
      nodes.push_back(hm->biases[i]);
    }
  }
  const auto params = model.parameters();
  AdamState state;
  const AdamConfig adam{cfg.learning_rate};
  Rng rng(cfg.seed ^ kTrainStream);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for_each_batch(order, cfg.batch_size, [&](const std::vector<std::size_t>& idx) {
      const Tensor xb = gather(data, idx);
      Tensor noise({idx.size(), cfg.latent_dim});
      for (auto& v : noise.data()) v = normal(rng);
      Bindings b;
      b.bind(lg.input, xb);
      b.bind(lg.noise, noise);
      bind_vae(model, lg, b);
      try {
        diff::Evaluation eval(lg.graph, b);
        const double value = eval.output()[0];
        auto grads = eval.backward(nodes);
        adam_step(params, grads, state, adam);
        loss_sum += value;
        ++batches;
      } catch (const diff::NonFiniteError& e) {
        throw TrainingError("VAE training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batches + 1) + ": " + e.what());
      }
    });
    out.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  return out;
}

double accuracy(const Classifier& c, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::vector<const Tensor*> rows;
  for (const auto& im : data.images) rows.push_back(&im);
  const Tensor p = c.predict_batch(stack_rows(rows));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.dim(1); ++k) {
      if (p.at(r, k) > p.at(r, best)) best = k;
    }
    if (static_cast<int>(best) == data.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace uattr::models
