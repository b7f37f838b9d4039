#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "uattr/uncertainty/uncertainty.hpp"

using namespace uattr;
using namespace uattr::uncertainty;
using models::Rng;

namespace {

Tensor random_input(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({n});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Tensor random_simplex(Rng& rng, std::size_t k) {
  std::exponential_distribution<double> e(1.0);
  Tensor t({k});
  double s = 0.0;
  for (auto& v : t.data()) s += (v = e(rng));
  for (auto& v : t.data()) v /= s;
  return t;
}

}  // namespace

TEST_CASE("entropy") {
  SUBCASE("examples") {
    CHECK(entropy(Tensor({10}, 0.1)) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(entropy(Tensor::vector({0.0, 1.0, 0.0})) == 0.0);
    CHECK(entropy(Tensor::vector({0.5, 0.5})) == doctest::Approx(0.693147180559945).epsilon(1e-12));
  }
  SUBCASE("range and permutation invariance") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
      const std::size_t k = 2 + static_cast<std::size_t>(i % 9);
      Tensor p = random_simplex(rng, k);
      const double h = entropy(p);
      CHECK(h >= 0.0);
      CHECK(h <= std::log(static_cast<double>(k)) + 1e-9);
      auto v = p.values();
      std::shuffle(v.begin(), v.end(), rng);
      CHECK(entropy(Tensor({k}, v)) == doctest::Approx(h).epsilon(1e-12));
    }
  }
  SUBCASE("off-simplex inputs") {
    CHECK_THROWS_AS(entropy(Tensor::vector({1.1, -0.1})), std::invalid_argument);
    CHECK_THROWS_AS(entropy(Tensor::vector({0.4, 0.4})), std::invalid_argument);
    CHECK(entropy(Tensor::vector({1.0 + 5e-7, -5e-7})) == doctest::Approx(0.0));
  }
}

TEST_CASE("posterior predictive") {
  SUBCASE("N = 1 equals a single masked forward") {
    auto c = Classifier::initialized({8, 6, 3}, 0.5, 2);
    auto s = draw_posterior_samples(c, 1, 5);
    Rng rng(1);
    Tensor x = random_input(rng, 8);
    auto p = posterior_predictive(c, x, s);
    auto q = c.predict(x, s.masks[0]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-14));
  }
  SUBCASE("identical masks give that masked forward") {
    auto c = Classifier::initialized({8, 6, 5, 3}, 0.3, 2);
    Rng rng(1);
    auto m = c.sample_mask(rng);
    PosteriorSamples s{{m, m, m, m}, 0};
    Tensor x = random_input(rng, 8);
    auto p = posterior_predictive(c, x, s);
    auto q = c.predict(x, m);
    for (std::size_t k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-14));
  }
  SUBCASE("dropout rate 0 equals the deterministic forward") {
    auto c = Classifier::initialized({8, 6, 3}, 0.0, 2);
    Rng rng(1);
    Tensor x = random_input(rng, 8);
    const auto q = c.predict(x);
    for (std::size_t n : {1, 7, 40}) {
      auto p = posterior_predictive(c, x, draw_posterior_samples(c, n, n));
      for (std::size_t k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(q[k]).epsilon(1e-14));
    }
  }
  SUBCASE("Monte-Carlo mean agrees with exhaustive mask enumeration") {
    auto c = Classifier::initialized({5, 4, 3}, 0.5, 21);
    Rng rng(4);
    Tensor x = random_input(rng, 5);
    // Oracle: all 16 keep/drop patterns of the 4 hidden units, equally likely.
    std::vector<double> exact(3, 0.0);
    for (int bits = 0; bits < 16; ++bits) {
      models::DropoutMask m{{Tensor({4})}};
      for (int u = 0; u < 4; ++u) m.layers[0][u] = (bits >> u) & 1 ? 2.0 : 0.0;
      auto p = c.predict(x, m);
      for (std::size_t k = 0; k < 3; ++k) exact[k] += p[k] / 16.0;
    }
    const std::size_t n = 10000;
    auto s = draw_posterior_samples(c, n, 99);
    auto probs = sample_predictions(c, x, s);
    auto mean = posterior_predictive(c, x, s);
    for (std::size_t k = 0; k < 3; ++k) {
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += std::pow(probs.at(i, k) - mean[k], 2);
      const double se = std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n));
      CAPTURE(k);
      CHECK(std::fabs(mean[k] - exact[k]) <= 3.0 * se);
    }
  }
}

TEST_CASE("decompose") {
  SUBCASE("identical samples have no epistemic part") {
    Tensor probs({3, 2}, {0.3, 0.7, 0.3, 0.7, 0.3, 0.7});
    auto r = decompose(probs);
    CHECK(r.epistemic == 0.0);
    CHECK(r.total == doctest::Approx(r.aleatoric).epsilon(1e-15));
  }
  SUBCASE("pure disagreement is all epistemic") {
    Tensor probs({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto r = decompose(probs);
    CHECK(r.total == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(r.aleatoric == 0.0);
    CHECK(r.epistemic == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("Jensen holds on random sample sets") {
    Rng rng(12);
    std::uniform_int_distribution<std::size_t> count(2, 12);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t k = 2 + static_cast<std::size_t>(trial % 4);
      auto c = Classifier::initialized({6, 5, k}, 0.5, static_cast<std::uint64_t>(trial));
      Tensor x = random_input(rng, 6);
      auto r = decompose(c, x, draw_posterior_samples(c, count(rng), static_cast<std::uint64_t>(trial)));
      CHECK(r.epistemic >= 0.0);
      CHECK(std::fabs(r.total - (r.aleatoric + r.epistemic)) <= 1e-12);
      CHECK(r.total <= std::log(static_cast<double>(k)) + 1e-9);
    }
  }
  SUBCASE("single-sample set") {
    auto c = Classifier::initialized({6, 5, 3}, 0.5, 1);
    Rng rng(2);
    auto r = decompose(c, random_input(rng, 6), draw_posterior_samples(c, 1, 3));
    CHECK(r.epistemic == 0.0);
  }
  SUBCASE("errors") {
    auto c = Classifier::initialized({6, 5, 3}, 0.5, 1);
    CHECK_THROWS_AS(draw_posterior_samples(c, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(posterior_predictive(c, Tensor({5}), draw_posterior_samples(c, 2, 1)), diff::ShapeError);
  }
}
