#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lowlight/autodiff/gradcheck.hpp"
#include "lowlight/autodiff/ops.hpp"
#include "lowlight/bpn.hpp"
#include "lowlight/error.hpp"

using namespace lowlight;
using namespace lowlight::bpn;
using ad::Shape;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Gaussian weights first, normalized afterwards.
std::vector<double> two_step_weights(const Tensor& gray, double mu, double var) {
  std::vector<double> g(gray.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::exp(-(gray[i] - mu) * (gray[i] - mu) / (2 * var));
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= total;
  return g;
}

}  // namespace

TEST_SUITE("bpn forward") {
  TEST_CASE("positive output for any input") {
    BpnConfig c;
    c.input_extent = 32;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto w = bpn_init(c, seed, -3.0).bind(nullptr);
      const Tensor t1 = bpn_forward(c, uniform({4, 32, 32}, seed, -5, 5), uniform({6, 32, 32}, seed + 9, -5, 5), w);
      CHECK(t1.rank() == 0);
      CHECK(t1.item() > 0.0);
      CHECK(t1.item() >= std::exp(c.z_min));
      CHECK(t1.item() <= std::exp(c.z_max));
    }
  }
  TEST_CASE("z = 0 maps to one second and the clamp holds") {
    const BpnConfig c;
    CHECK(time_from_logit(c, Tensor::scalar(0.0)).item() == 1.0);
    CHECK(time_from_logit(c, Tensor::scalar(50.0)).item() == doctest::Approx(std::exp(4.0)));
    CHECK(time_from_logit(c, Tensor::scalar(-50.0)).item() == doctest::Approx(std::exp(-7.0)));
  }
  TEST_CASE("initial prediction sits near the output bias") {
    const BpnConfig c;
    const auto w = bpn_init(c, 1, std::log(0.05)).bind(nullptr);
    const Tensor t1 = bpn_forward(c, uniform({4, 64, 64}, 2, 0, 1), Tensor::zeros({6, 64, 64}), w);
    CHECK(std::fabs(std::log(t1.item()) - std::log(0.05)) < 0.5);
  }
  TEST_CASE("wrong extent is rejected") {
    const BpnConfig c;
    const auto w = bpn_init(c, 1).bind(nullptr);
    CHECK_THROWS_AS(bpn_forward(c, Tensor::zeros({4, 32, 32}), Tensor::zeros({6, 32, 32}), w), ContractError);
    BpnConfig bad;
    bad.input_extent = 40;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }
  TEST_CASE("gradient of t1 matches finite differences") {
    BpnConfig c;
    c.input_extent = 16;
    c.stage_channels = {4, 6};
    c.fc_widths = {5};
    const auto point = bpn_init(c, 3, -2.0).bind(nullptr);
    const Tensor x = uniform({4, 16, 16}, 4, 0, 1), p = uniform({6, 16, 16}, 5, -1, 1);
    ad::GradCheckOptions o;
    o.max_coordinates = 10;
    const auto r =
        ad::grad_check([&](std::span<const Tensor> w) { return bpn_forward(c, x, p, w); }, point, o);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_SUITE("aoi weight map") {
  TEST_CASE("constant images give a uniform map") {
    for (double level : {0.0, 0.3, 0.5, 1.0}) {
      const Tensor w = aoi_weight_map(Tensor::full({1, 6, 5}, level), 0.5, 0.01);
      for (double v : w.values()) CHECK(std::fabs(v - 1.0 / 30) <= 1e-12);
    }
  }
  TEST_CASE("two-pixel worked example") {
    const Tensor w = aoi_weight_map(Tensor({1, 1, 2}, {0.5, 0.0}), 0.5, 0.01);
    const double e = std::exp(-12.5);
    CHECK(std::fabs(w[0] - 1 / (1 + e)) < 1e-12);
    CHECK(std::fabs(w[1] - e / (1 + e)) < 1e-12);
    CHECK(std::fabs(w[0] - 0.9999963) < 1e-7);
    CHECK(std::fabs(w[1] - 3.73e-6) < 1e-8);
  }
  TEST_CASE("softmax form equals Gaussian-then-normalize") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor gray = uniform({1, 9, 11}, seed, 0, 1);
      const Tensor w = aoi_weight_map(gray, 0.5, 0.01);
      const auto ref = two_step_weights(gray, 0.5, 0.01);
      double total = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(std::fabs(w[i] - ref[i]) < 1e-12);
        CHECK(w[i] >= 0.0);
        total += w[i];
      }
      CHECK(std::fabs(total - 1.0) < 1e-9);
    }
  }
  TEST_CASE("permutation equivariance") {
    const Tensor gray = uniform({1, 4, 6}, 3, 0, 1);
    std::vector<std::size_t> perm(24);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    std::vector<double> permuted(24);
    for (std::size_t i = 0; i < 24; ++i) permuted[i] = gray[perm[i]];
    const Tensor w = aoi_weight_map(gray, 0.5, 0.01);
    const Tensor wp = aoi_weight_map(Tensor({1, 4, 6}, permuted), 0.5, 0.01);
    for (std::size_t i = 0; i < 24; ++i) CHECK(wp[i] == doctest::Approx(w[perm[i]]).epsilon(1e-14));
  }
}

TEST_SUITE("loss_bp") {
  TEST_CASE("closed forms") {
    const Tensor w = aoi_weight_map(uniform({1, 2, 2}, 1, 0, 1), 0.5, 0.01);
    CHECK(loss_bp(Tensor::full({1, 2, 2}, 0.5), w, 0.5, 0.04).item() == -0.25);
    CHECK(loss_bp(Tensor({1, 1, 1}, {0.0}), Tensor({1, 1, 1}, {1.0}), 0.5, 0.04).item() ==
          doctest::Approx(-std::exp(-3.125)).epsilon(1e-14));
    CHECK(std::fabs(-std::exp(-3.125) + 0.04394) < 1e-5);
  }
  TEST_CASE("bounds hold on random inputs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Tensor w = aoi_weight_map(uniform({1, 5, 5}, seed, 0, 1), 0.5, 0.01);
      const double l = loss_bp(uniform({1, 5, 5}, seed + 50, 0, 1), w, 0.5, 0.04).item();
      CHECK(l >= -1.0 / 25);
      CHECK(l < 0.0);
    }
  }
  TEST_CASE("pixels with zero weight do not matter") {
    const Tensor w({1, 1, 3}, {0.5, 0.5, 0.0});
    const double a = loss_bp(Tensor({1, 1, 3}, {0.3, 0.6, 0.1}), w, 0.5, 0.04).item();
    const double b = loss_bp(Tensor({1, 1, 3}, {0.3, 0.6, 0.9}), w, 0.5, 0.04).item();
    CHECK(a == b);
  }
  TEST_CASE("gradient on random 8x8 inputs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Tensor w = aoi_weight_map(uniform({1, 8, 8}, seed, 0, 1), 0.5, 0.01);
      // Step 1e-4: at 1e-5, round-off on ~1e-9 gradients alone reaches a few 1e-6.
      const auto r = ad::grad_check([&](const Tensor& x) { return loss_bp(x, w, 0.5, 0.04); },
                                    uniform({1, 8, 8}, seed + 10, 0, 1), 1e-4);
      CHECK(r.max_relative_error < 1e-6);
    }
  }
  TEST_CASE("invalid weight maps and shapes are rejected") {
    CHECK_THROWS_AS(loss_bp(Tensor::zeros({1, 2, 2}), Tensor::full({1, 2, 2}, 0.5), 0.5, 0.04), ContractError);
    CHECK_THROWS_AS(loss_bp(Tensor::zeros({1, 2, 2}), Tensor::full({1, 1, 4}, 0.25), 0.5, 0.04), ContractError);
    CHECK_THROWS_AS(loss_bp(Tensor::zeros({3, 2, 2}), Tensor::full({3, 2, 2}, 1.0 / 12), 0.5, 0.04), ContractError);
  }
}
