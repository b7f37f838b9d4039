#include <doctest.h>

#include <cmath>
#include <random>

#include "support/finite_diff.hpp"
#include "uattr/attribution/attribute.hpp"

using namespace uattr;
using namespace uattr::attribution;
using models::Activation;
using models::DenseLayer;
using models::Rng;

namespace {

Tensor random_input(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({n});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Mlp identity_decoder(std::size_t n) {
  DenseLayer l{Tensor({n, n}), Tensor({n}), Activation::Identity};
  for (std::size_t i = 0; i < n; ++i) l.weights.data()[i * n + i] = 1.0;
  return Mlp({l});
}

// Scales the first-layer weights so that entropies vary over the unit cube.
Classifier sharp_classifier(std::vector<std::size_t> sizes, std::uint64_t seed, double scale = 3.0) {
  auto c = Classifier::initialized(sizes, 0.5, seed);
  for (auto& w : c.network().layers()[0].weights.data()) w *= scale;
  return c;
}

Classifier with_dead_pixel(Classifier c, std::size_t pixel) {
  auto& w = c.network().layers()[0].weights;
  for (std::size_t j = 0; j < w.cols(); ++j) w.data()[pixel * w.cols() + j] = 0.0;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("paths") {
  SUBCASE("straight path with two bins has the midpoint") {
    Tensor x0 = Tensor::vector({0.0, 1.0, 0.2});
    Tensor x = Tensor::vector({1.0, 0.0, 0.6});
    auto pts = straight_path(x0, x, 2).points();
    REQUIRE(pts.size() == 3);
    CHECK(pts[0] == x0);
    CHECK(pts[1][0] == 0.5);
    CHECK(pts[1][1] == 0.5);
    CHECK(pts[1][2] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(pts[2] == x);
  }
  SUBCASE("generative path endpoints, range and node counts") {
    auto v = VaeModel::initialized(12, 10, 3, 5);
    Rng rng(2);
    Tensor x = random_input(rng, 12);
    Tensor z0 = random_input(rng, 3, -2.0, 2.0);
    Tensor z = v.encode_mean(x);
    auto path = generative_path(v, z0, z, x, 7);
    REQUIRE(path.segments.size() == 2);
    CHECK(path.segments[0].nodes() == 8);
    CHECK(path.segments[1].nodes() == 5);
    CHECK(path.start() == v.decode(z0));
    CHECK(path.end() == x);
    auto pts = path.points();
    CHECK(pts.size() == 12);
    for (const auto& p : pts) {
      for (double val : p.data()) CHECK((val >= 0.0 && val <= 1.0));
    }
    PathSpec spec{PathMode::Generative, 7, false};
    auto no_corr = path_points(v, z0, z, x, spec);
    CHECK(no_corr.size() == 8);
    CHECK(no_corr.back() == v.decode(z));
  }
  SUBCASE("generative tangents match finite differences of the decoded curve") {
    auto v = VaeModel::initialized(6, 8, 2, 9);
    Tensor z0 = Tensor::vector({-1.0, 0.5});
    Tensor z = Tensor::vector({0.7, -0.3});
    auto path = generative_path(v, z0, z, Tensor({6}, 0.5), 4, false);
    const auto& seg = path.segments[0];
    for (std::size_t k = 0; k < seg.nodes(); ++k) {
      const double a = static_cast<double>(k) / 4.0;
      auto curve = [&](double t) {
        Tensor zz({2});
        for (std::size_t j = 0; j < 2; ++j) zz[j] = z0[j] + t * (z[j] - z0[j]);
        return v.decode(zz);
      };
      const double h = 1e-6;
      const Tensor up = curve(a + h), down = curve(a - h);
      for (std::size_t i = 0; i < 6; ++i) {
        CHECK(seg.tangents.at(k, i) == doctest::Approx((up[i] - down[i]) / (2 * h)).epsilon(1e-6));
      }
    }
  }
  SUBCASE("degenerate latent path decodes to a single image") {
    auto v = VaeModel::initialized(6, 8, 2, 9);
    Tensor z = Tensor::vector({0.3, -0.4});
    PathSpec spec{PathMode::Generative, 5, false};
    auto pts = path_points(v, z, z, Tensor({6}, 0.5), spec);
    for (const auto& p : pts) CHECK(p == v.decode(z));
  }
  SUBCASE("fewer than two bins") {
    CHECK_THROWS_AS(straight_path(Tensor({3}), Tensor({3}), 1), std::invalid_argument);
  }
  SUBCASE("gradient batch mismatch") {
    auto path = straight_path(Tensor({3}), Tensor({3}, 1.0), 4);
    CHECK_THROWS_AS(integrate_path(path, [](const Tensor&) { return Tensor({4, 3}); }), diff::ShapeError);
  }
}

TEST_CASE("linear probe integrates to the endpoint difference") {
  Rng rng(7);
  for (std::size_t bins : {2, 3, 50}) {
    Tensor x0 = random_input(rng, 10), x = random_input(rng, 10);
    auto path = straight_path(x0, x, bins);
    // F(x) = sum_i x_i has unit gradient everywhere.
    auto attr = integrate_path(path, [](const Tensor& pts) { return Tensor(pts.shape(), 1.0); });
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::fabs(attr[i] - (x[i] - x0[i])) <= 1e-14);
  }
}

TEST_CASE("entropy objective") {
  auto c = sharp_classifier({8, 6, 3}, 4);
  auto s = uncertainty::draw_posterior_samples(c, 5, 1);
  Rng rng(3);
  Tensor pts({3, 8});
  for (auto& v : pts.data()) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (const PosteriorSamples* samples : std::vector<const PosteriorSamples*>{nullptr, &s}) {
    EntropyObjective f(c, samples);
    auto g = f.gradients(pts);
    auto vals = f.values(pts);
    for (std::size_t r = 0; r < 3; ++r) {
      Tensor x({8});
      for (std::size_t i = 0; i < 8; ++i) x[i] = pts.at(r, i);
      auto fx = [&](const Tensor& y) { return f.values(models::as_row(y))[0]; };
      CHECK(vals[r] == doctest::Approx(fx(x)).epsilon(1e-15));
      auto fd = testing::fd_gradient(fx, x);
      Tensor row({8});
      for (std::size_t i = 0; i < 8; ++i) row[i] = g.at(r, i);
      CHECK(testing::relative_error(row, fd) <= 1e-6);
    }
  }
}

TEST_CASE("bayesian gradients agree with independent routes") {
  auto c = sharp_classifier({8, 10, 3}, 14);
  auto s = uncertainty::draw_posterior_samples(c, 6, 3);
  Rng rng(5);
  Tensor x = random_input(rng, 8);
  auto g = bayesian_gradients(c, s, models::as_row(x));
  // The full term is the gradient of the posterior-predictive entropy.
  auto direct = EntropyObjective(c, &s).gradients(models::as_row(x));
  CHECK(testing::relative_error(g.full, direct) <= 1e-10);
  // The aleatoric term is the gradient of the mean per-draw entropy.
  auto fd = testing::fd_gradient([&](const Tensor& y) { return uncertainty::decompose(c, y, s).aleatoric; }, x);
  CHECK(testing::relative_error(g.aleatoric.reshaped({8}), fd) <= 1e-6);
}

TEST_CASE("completeness") {
  auto c = sharp_classifier({12, 10, 3}, 8, 4.0);
  Rng rng(11);
  SUBCASE("straight path residual shrinks with bins") {
    Tensor x = random_input(rng, 12);
    double previous = 1e9;
    for (std::size_t bins : {25, 50, 100}) {
      auto m = ig_attribute(c, x, FiducialSpec{FiducialKind::Black}, bins);
      CHECK(m.residual <= std::max(0.05 * m.f_input, 0.01));
      CHECK(m.residual <= previous * 1.1);
      previous = m.residual;
    }
  }
  SUBCASE("generative path with correction") {
    auto v = VaeModel::initialized(12, 16, 3, 2);
    Tensor x = random_input(rng, 12);
    Tensor z0 = random_input(rng, 3, -1.5, 1.5);
    Tensor z = v.encode_mean(x);
    auto coarse = attribute_entropy(c, generative_path(v, z0, z, x, 25));
    auto fine = attribute_entropy(c, generative_path(v, z0, z, x, 100));
    CHECK(coarse.f_fiducial == doctest::Approx(uncertainty::entropy(c.predict(v.decode(z0)))).epsilon(1e-14));
    CHECK(coarse.f_input == doctest::Approx(uncertainty::entropy(c.predict(x))).epsilon(1e-14));
    CHECK(fine.residual <= std::max(0.05 * fine.f_input, 0.01));
    CHECK(fine.residual <= coarse.residual * 1.1);
  }
  SUBCASE("posterior-predictive entropy") {
    auto s = uncertainty::draw_posterior_samples(c, 8, 1);
    Tensor x = random_input(rng, 12);
    auto m = ig_attribute(c, x, FiducialSpec{FiducialKind::White}, 50, &s);
    CHECK(m.f_input == doctest::Approx(uncertainty::decompose(c, x, s).total).epsilon(1e-13));
    CHECK(m.residual <= std::max(0.05 * m.f_input, 0.01));
  }
}

TEST_CASE("dummy pixels receive zero attribution in every variant") {
  const std::size_t dead = 3;
  auto c = with_dead_pixel(sharp_classifier({10, 8, 3}, 21), dead);
  auto v = VaeModel::initialized(10, 12, 2, 4);
  auto s = uncertainty::draw_posterior_samples(c, 4, 2);
  Rng rng(9);
  Tensor x = random_input(rng, 10);
  for (auto kind : {FiducialKind::Black, FiducialKind::White, FiducialKind::BlackWhite}) {
    CHECK(ig_attribute(c, x, FiducialSpec{kind}, 10).values[dead] == 0.0);
    CHECK(ig_attribute(c, x, FiducialSpec{kind}, 10, &s).values[dead] == 0.0);
  }
  Tensor z0 = random_input(rng, 2, -1.0, 1.0);
  auto path = generative_path(v, z0, v.encode_mean(x), x, 10);
  CHECK(attribute_entropy(c, path).values[dead] == 0.0);
  auto maps = attribute_bayesian(c, path, s);
  CHECK(maps.full.values[dead] == 0.0);
  CHECK(maps.aleatoric.values[dead] == 0.0);
  CHECK(maps.epistemic.values[dead] == 0.0);
}

TEST_CASE("integrated gradients special cases") {
  auto c = sharp_classifier({6, 5, 2}, 3);
  SUBCASE("input equal to the fiducial") {
    auto m = ig_attribute(c, Tensor({6}, 0.0), FiducialSpec{FiducialKind::Black}, 20);
    for (double v : m.values.data()) CHECK(v == 0.0);
  }
  SUBCASE("black pixel under a black fiducial") {
    Tensor x = Tensor::vector({0.0, 0.4, 0.9, 0.0, 0.2, 1.0});
    auto m = ig_attribute(c, x, FiducialSpec{FiducialKind::Black}, 20);
    CHECK(m.values[0] == 0.0);
    CHECK(m.values[3] == 0.0);
  }
  SUBCASE("black+white is the mean of both maps") {
    Tensor x = Tensor::vector({0.1, 0.4, 0.9, 0.3, 0.2, 0.7});
    auto b = ig_attribute(c, x, FiducialSpec{FiducialKind::Black}, 20);
    auto w = ig_attribute(c, x, FiducialSpec{FiducialKind::White}, 20);
    auto bw = ig_attribute(c, x, FiducialSpec{FiducialKind::BlackWhite}, 20);
    for (std::size_t i = 0; i < 6; ++i) CHECK(bw.values[i] == doctest::Approx(0.5 * (b.values[i] + w.values[i])));
    CHECK(bw.fiducial == "black+white");
  }
  SUBCASE("counterfactual needs a VAE") {
    CHECK_THROWS_AS(ig_attribute(c, Tensor({6}, 0.5), FiducialSpec{FiducialKind::Counterfactual}, 20),
                    std::invalid_argument);
  }
}

TEST_CASE("implementation invariance") {
  // f2 composes an identity-activated 8->5 layer A and a 5->6 layer B with
  // AB = W, which matches f1 with first layer W.
  Rng rng(13);
  std::normal_distribution<double> normal(0.0, 0.6);
  Tensor a({8, 5}), b({5, 6});
  for (auto& v : a.data()) v = normal(rng);
  for (auto& v : b.data()) v = normal(rng);
  Tensor w({8, 6});
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t p = 0; p < 5; ++p) {
      for (std::size_t j = 0; j < 6; ++j) w.data()[i * 6 + j] += a.at(i, p) * b.at(p, j);
    }
  }
  Tensor b1 = random_input(rng, 6, -0.5, 0.5);
  DenseLayer out{Tensor({6, 3}), random_input(rng, 3, -0.5, 0.5), Activation::Softmax};
  for (auto& v : out.weights.data()) v = normal(rng);
  Classifier f1(Mlp({DenseLayer{w, b1, Activation::Relu}, out}), 0.5);
  Classifier f2(Mlp({DenseLayer{a, Tensor({5}), Activation::Identity}, DenseLayer{b, b1, Activation::Relu}, out}), 0.5);
  Tensor x = random_input(rng, 8);
  for (auto kind : {FiducialKind::Black, FiducialKind::White}) {
    auto m1 = ig_attribute(f1, x, FiducialSpec{kind}, 50);
    auto m2 = ig_attribute(f2, x, FiducialSpec{kind}, 50);
    CHECK(max_abs_diff(m1.values, m2.values) <= 1e-9);
  }
}

TEST_CASE("bayesian maps") {
  auto c = sharp_classifier({8, 10, 3}, 31);
  Rng rng(17);
  Tensor x = random_input(rng, 8);
  auto path = straight_path(Tensor({8}, 0.0), x, 30);
  SUBCASE("additivity") {
    auto s = uncertainty::draw_posterior_samples(c, 16, 4);
    auto maps = attribute_bayesian(c, path, s);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::fabs(maps.aleatoric.values[i] + maps.epistemic.values[i] - maps.full.values[i]) <= 1e-12);
    }
    CHECK(maps.full.residual <= std::max(0.05 * maps.full.f_input, 0.01));
    CHECK(maps.aleatoric.residual <= std::max(0.05 * maps.aleatoric.f_input, 0.01));
    // The full map matches attribute_entropy under the same samples.
    auto direct = attribute_entropy(c, path, &s);
    CHECK(max_abs_diff(direct.values, maps.full.values) <= 1e-10);
  }
  SUBCASE("a single draw leaves no epistemic attribution") {
    auto s = uncertainty::draw_posterior_samples(c, 1, 4);
    auto maps = attribute_bayesian(c, path, s);
    CHECK(max_abs_diff(maps.full.values, maps.aleatoric.values) <= 1e-12);
    for (double v : maps.epistemic.values.data()) CHECK(std::fabs(v) <= 1e-12);
  }
}

TEST_CASE("reconstruction search") {
  SUBCASE("identity decoder with squared error has a closed-form optimum") {
    const std::size_t m = 4;
    Tensor x = Tensor::vector({0.2, 0.9, 0.5, 0.0});
    DescentConfig cfg{0.01, 20000, 0.0, 10, Distance::SquaredError};
    auto r = find_reconstruction(identity_decoder(m), x, Tensor({m}), cfg);
    // Stationarity of sum (z - x)^2 + z.z / (2m): z = 2m x / (2m + 1).
    for (std::size_t j = 0; j < m; ++j) {
      CHECK(std::fabs(r.z[j] - x[j] * 2.0 * m / (2.0 * m + 1.0)) <= 1e-4);
    }
  }
  SUBCASE("zero learning rate keeps the encoder mean") {
    auto v = VaeModel::initialized(10, 12, 3, 1);
    Tensor x = Tensor({10}, 0.4);
    DescentConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.max_iterations = 20;
    auto r = find_reconstruction(v, x, cfg);
    CHECK(r.z == v.encode_mean(x));
  }
  SUBCASE("never worse than the start") {
    Rng rng(4);
    for (int i = 0; i < 10; ++i) {
      auto v = VaeModel::initialized(10, 12, 3, static_cast<std::uint64_t>(i));
      Tensor x = random_input(rng, 10);
      DescentConfig cfg;
      cfg.max_iterations = 200;
      auto r = find_reconstruction(v, x, cfg);
      CHECK(r.distance <= r.start_distance);
      const double recomputed = reconstruction_loss(v.decoder(), x, r.z, Distance::MeanAbsolute);
      CHECK(r.loss == doctest::Approx(recomputed).epsilon(1e-14));
    }
  }
  SUBCASE("divergence is a hard error") {
    DescentConfig cfg{1e300, 5, 0.0, 10, Distance::SquaredError};
    CHECK_THROWS_AS(find_reconstruction(identity_decoder(2), Tensor::vector({0.5, 0.5}), Tensor({2}), cfg),
                    DivergenceError);
  }
}

TEST_CASE("counterfactual search") {
  auto v = VaeModel::initialized(10, 12, 3, 6);
  Rng rng(21);
  Tensor x = random_input(rng, 10);
  SUBCASE("zero penalty reduces to the reconstruction loss") {
    auto c = sharp_classifier({10, 8, 3}, 5);
    for (int i = 0; i < 5; ++i) {
      Tensor z = random_input(rng, 3, -2.0, 2.0);
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(counterfactual_loss(c, v.decoder(), x, z, k, 0.0, Distance::MeanAbsolute) ==
              reconstruction_loss(v.decoder(), x, z, Distance::MeanAbsolute));
      }
    }
  }
  SUBCASE("a confident classifier is satisfied near the reconstruction optimum") {
    auto c = Classifier::zeros({10, 8, 3}, 0.5);
    c.network().layers()[1].bias[1] = 12.0;
    FiducialSpec spec{FiducialKind::Counterfactual};
    auto cf = find_counterfactual_fiducial(c, v, x, spec);
    CHECK_FALSE(cf.target_missed);
    CHECK(cf.target_class == 1);
    CHECK(cf.predicted_class == 1);
    CHECK(cf.entropy <= spec.entropy_target);
    auto rec = find_reconstruction(v, x, spec.descent);
    const double l_cf = reconstruction_loss(v.decoder(), x, cf.z0, Distance::MeanAbsolute);
    CHECK(l_cf <= rec.loss + 1e-3);
  }
  SUBCASE("search lowers the entropy and keeps the class") {
    auto c = sharp_classifier({10, 8, 3}, 5, 6.0);
    FiducialSpec spec{FiducialKind::Counterfactual};
    spec.descent.max_iterations = 500;
    auto cf = find_counterfactual_fiducial(c, v, x, spec);
    const double start_entropy = uncertainty::entropy(c.predict(v.decode(v.encode_mean(x))));
    CHECK(cf.entropy <= start_entropy);
    CHECK(cf.predicted_class == models::argmax(c.predict(x)));
    CHECK(cf.entropy == doctest::Approx(uncertainty::entropy(c.predict(v.decode(cf.z0)))).epsilon(1e-12));
  }
  SUBCASE("an unreachable target is flagged") {
    auto c = Classifier::zeros({10, 8, 3}, 0.5);
    FiducialSpec spec{FiducialKind::Counterfactual};
    spec.descent.max_iterations = 5;
    auto cf = find_counterfactual_fiducial(c, v, x, spec);
    CHECK(cf.target_missed);
    CHECK(cf.entropy == doctest::Approx(std::log(3.0)));
  }
}

TEST_CASE("generative attribution end to end") {
  auto c = sharp_classifier({10, 8, 3}, 5, 6.0);
  auto v = VaeModel::initialized(10, 12, 3, 6);
  Rng rng(23);
  Tensor x = random_input(rng, 10);
  GenerativeSpec spec;
  spec.fiducial.descent.max_iterations = 300;
  spec.reconstruction.max_iterations = 300;
  auto plan = plan_generative(c, v, x, spec);
  auto m = generative_attribute(c, v, x, spec);
  CHECK(m.fiducial == "counterfactual");
  REQUIRE(m.counterfactual.has_value());
  CHECK(m.f_fiducial == doctest::Approx(m.counterfactual->entropy).epsilon(1e-12));
  CHECK(m.residual <= std::max(0.05 * m.f_input, 0.01));
  CHECK(plan.path.start() == v.decode(plan.counterfactual.z0));
  CHECK(plan.path.end() == x);
  auto s = uncertainty::draw_posterior_samples(c, 4, 8);
  auto maps = bayesian_generative_attribute(c, v, x, spec, s);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(std::fabs(maps.aleatoric.values[i] + maps.epistemic.values[i] - maps.full.values[i]) <= 1e-12);
  }
}
