#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lowlight/autodiff/adam.hpp"
#include "lowlight/autodiff/gradcheck.hpp"
#include "lowlight/autodiff/ops.hpp"
#include "lowlight/autodiff/params.hpp"
#include "lowlight/error.hpp"

using namespace lowlight;
using namespace lowlight::ad;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Keeps points away from kinks at 0 (leaky_relu, abs).
Tensor away_from_zero(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed);
  std::vector<double> v(t.values().begin(), t.values().end());
  for (double& x : v) x = (x < 0 ? -0.1 : 0.1) + 0.9 * x;
  return Tensor(t.shape(), std::move(v));
}

double check1(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  return grad_check(f, x).max_relative_error;
}

// Weighted sum keeps every output coordinate in play.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  return sum(mul(y, random_tensor(y.shape(), seed)));
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape and data length must agree") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ContractError);
    CHECK(Tensor({2, 3}, std::vector<double>(6)).size() == 6);
  }
  TEST_CASE("values created outside a tape carry no node") {
    const Tensor t = Tensor::full({2, 2}, 1.0);
    CHECK_FALSE(t.recorded());
    CHECK_FALSE(mul_scalar(t, 2.0).recorded());
  }
  TEST_CASE("tape nodes are appended in topological order") {
    Tape tape;
    const Tensor x = tape.watch(Tensor::full({3}, 2.0));
    const Tensor y = exp(x);
    const Tensor z = sum(mul(y, x));
    CHECK(x.node() < y.node());
    CHECK(y.node() < z.node());
    CHECK(tape.size() == z.node() + 1);
  }
}

TEST_SUITE("forward ops") {
  TEST_CASE("1x1 identity convolution leaves the input unchanged") {
    const Tensor x = random_tensor({3, 5, 4}, 1);
    std::vector<double> w(9, 0.0);
    w[0] = w[4] = w[8] = 1.0;
    const Tensor y = conv2d(x, Tensor({3, 3, 1, 1}, w), Tensor::zeros({3}));
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  TEST_CASE("spatial softmax of a constant map is uniform") {
    const Tensor s = spatial_softmax(Tensor::full({1, 6, 7}, 3.3));
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 42).epsilon(1e-14));
  }
  TEST_CASE("leaky relu with slope 0.2") {
    const Tensor y = leaky_relu(Tensor({2}, {-1.0, 2.0}), 0.2);
    CHECK(y[0] == doctest::Approx(-0.2));
    CHECK(y[1] == 2.0);
  }
  TEST_CASE("pixel shuffle places channels on the 2x2 grid") {
    std::vector<double> v(8);
    for (std::size_t i = 0; i < 8; ++i) v[i] = static_cast<double>(i);
    const Tensor y = pixel_shuffle(Tensor({8, 1, 1}, v));
    CHECK(y.shape() == Shape{2, 2, 2});
    CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
          std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
    const Tensor x = random_tensor({12, 3, 5}, 2);
    const Tensor back = pixel_unshuffle(pixel_shuffle(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);
  }
  TEST_CASE("max pool routes ties to the first maximum") {
    Tape tape;
    const Tensor x = tape.watch(Tensor({1, 2, 2}, {1.0, 1.0, 1.0, 0.0}));
    const Gradients g = tape.backward(sum(max_pool_2x2(x)));
    const Tensor dx = g.of(x);
    CHECK(dx[0] == 1.0);
    CHECK(dx[1] == 0.0);
    CHECK(dx[2] == 0.0);
  }
  TEST_CASE("subgradients at kinks are fixed") {
    Tape tape;
    const Tensor x = tape.watch(Tensor({3}, {0.0, 1.0, -1.0}));
    const Tensor dabs = tape.backward(sum(abs(x))).of(x);
    CHECK(dabs[0] == 0.0);
    Tape tape2;
    const Tensor x2 = tape2.watch(Tensor({3}, {0.0, 1.0, 0.5}));
    const Tensor dclamp = tape2.backward(sum(clamp(x2, 0.0, 1.0))).of(x2);
    CHECK(dclamp[0] == 1.0);
    CHECK(dclamp[1] == 1.0);
  }
  TEST_CASE("shape errors name the op and the shapes") {
    try {
      add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
      FAIL("expected a contract error");
    } catch (const ContractError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("add") != std::string::npos);
      CHECK(msg.find("(2,3)") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1})),
                    ContractError);
  }
  TEST_CASE("non-finite parameters are rejected") {
    const Tensor x = Tensor::zeros({1, 4, 4});
    CHECK_THROWS_AS(leaky_relu(x, std::nan("")), ContractError);
    CHECK_THROWS_AS(mul_scalar(x, INFINITY), ContractError);
    CHECK_THROWS_AS(gaussian_blur(x, std::nan(""), 2), ContractError);
  }
  TEST_CASE("blur keeps constants fixed") {
    const Tensor y = gaussian_blur(Tensor::full({2, 9, 12}, 0.7), 1.5, 5);
    for (double v : y.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));
  }
}

TEST_SUITE("backward") {
  TEST_CASE("sum gives all ones") {
    Tape tape;
    const Tensor x = tape.watch(random_tensor({2, 3, 4}, 3));
    const Tensor g = tape.backward(sum(x)).of(x);
    for (double v : g.values()) CHECK(v == 1.0);
  }
  TEST_CASE("mean of squares at (1, -1)") {
    Tape tape;
    const Tensor x = tape.watch(Tensor({2}, {1.0, -1.0}));
    const Tensor g = tape.backward(mean(square(x))).of(x);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == -1.0);
  }
  TEST_CASE("unused leaves receive zero") {
    Tape tape;
    const Tensor x = tape.watch(Tensor::full({3}, 1.0));
    const Tensor unused = tape.watch(Tensor::full({2}, 1.0));
    const Gradients g = tape.backward(sum(x));
    CHECK_FALSE(g.reached(unused));
    const Tensor du = g.of(unused);
    for (double v : du.values()) CHECK(v == 0.0);
  }
  TEST_CASE("non-scalar and foreign losses are rejected") {
    Tape tape, other;
    const Tensor x = tape.watch(Tensor::full({3}, 1.0));
    CHECK_THROWS_AS(tape.backward(exp(x)), ContractError);
    const Tensor y = other.watch(Tensor::full({3}, 1.0));
    CHECK_THROWS_AS(tape.backward(sum(y)), ContractError);
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), ContractError);
  }
  TEST_CASE("reused values accumulate gradients") {
    Tape tape;
    const Tensor x = tape.watch(Tensor::scalar(3.0));
    const Tensor g = tape.backward(mul(x, add(x, x))).of(x);  // 2x^2
    CHECK(g.item() == doctest::Approx(12.0));
  }
}

TEST_SUITE("gradient check") {
  TEST_CASE("quadratic is exact") {
    CHECK(check1([](const Tensor& x) { return square(x); }, Tensor::scalar(3.0)) < 1e-8);
  }
  TEST_CASE("non-finite values are reported with the coordinate") {
    try {
      // exp overflows once 800 x passes ~709.78
      grad_check([](const Tensor& x) { return sum(exp(mul_scalar(x, 800.0))); },
                 Tensor({2}, {0.0, 709.78 / 800.0}));
      FAIL("expected an error");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("coordinate 1") != std::string::npos);
    }
  }
  TEST_CASE("conv2d 3x3 on a 6x6 input") {
    const Tensor pts[] = {random_tensor({2, 6, 6}, 4), random_tensor({3, 2, 3, 3}, 5),
                          random_tensor({3}, 6)};
    for (std::size_t stride : {1u, 2u}) {
      const auto r = grad_check(
          [stride](std::span<const Tensor> in) { return probe(conv2d(in[0], in[1], in[2], stride)); },
          pts);
      CHECK(r.max_relative_error < 1e-4);
    }
  }

  TEST_CASE("every primitive at random points") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(seed);
      const Tensor img = random_tensor({2, 6, 8}, 100 + seed);
      const Tensor pos = random_tensor({2, 6, 8}, 200 + seed, 0.2, 2.0);
      const Tensor other = random_tensor({2, 6, 8}, 300 + seed);
      const Tensor kinky = away_from_zero({2, 6, 8}, 400 + seed);

      CHECK(check1([](const Tensor& x) { return probe(leaky_relu(x, 0.2)); }, kinky) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(sigmoid(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(exp(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(log(x)); }, pos) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(abs(x)); }, kinky) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(square(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(pow(x, 0.7)); }, pos) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(clamp(x, -0.5, 0.5)); }, kinky) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(max_pool_2x2(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(upsample_nearest_2x(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(avg_downsample_2x(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(pixel_shuffle(reshape(x, {4, 3, 8}))); }, img) <
            1e-4);
      CHECK(check1([](const Tensor& x) { return probe(resize_nearest(x, 4, 11)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(spatial_softmax(x)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(gaussian_blur(x, 1.5, 5)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(sum(x, 1)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(mean(x, 2)); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return mean(x); }, img) < 1e-4);
      CHECK(check1([](const Tensor& x) { return probe(add_scalar(mul_scalar(x, 3.0), 1.0)); }, img) <
            1e-4);
      CHECK(check1([](const Tensor& x) { return probe(broadcast(sum(x), {3, 2})); }, img) < 1e-4);

      const Tensor pair[] = {img, other};
      const Tensor ratio[] = {img, pos};
      auto run2 = [](auto f, std::span<const Tensor> p) { return grad_check(f, p).max_relative_error; };
      CHECK(run2([](std::span<const Tensor> in) { return probe(add(in[0], in[1])); }, pair) < 1e-4);
      CHECK(run2([](std::span<const Tensor> in) { return probe(sub(in[0], in[1])); }, pair) < 1e-4);
      CHECK(run2([](std::span<const Tensor> in) { return probe(mul(in[0], in[1])); }, pair) < 1e-4);
      CHECK(run2([](std::span<const Tensor> in) { return probe(div(in[0], in[1])); }, ratio) < 1e-4);
      CHECK(run2([](std::span<const Tensor> in) { return probe(concat_channels(in[0], in[1])); }, pair) <
            1e-4);

      const Tensor lin[] = {random_tensor({5}, 500 + seed), random_tensor({3, 5}, 600 + seed),
                            random_tensor({3}, 700 + seed)};
      CHECK(run2([](std::span<const Tensor> in) { return probe(linear(in[0], in[1], in[2])); }, lin) <
            1e-4);
    }
  }
}

TEST_SUITE("params") {
  TEST_CASE("digest tracks values and names") {
    ParamSet a;
    a.add("w", Tensor::full({2}, 1.0));
    ParamSet b = a;
    CHECK(a.digest() == b.digest());
    b.set(0, Tensor::full({2}, 1.0 + 1e-15));
    CHECK(a.digest() != b.digest());
    CHECK_THROWS_AS(b.set(0, Tensor::zeros({3})), ContractError);
    CHECK_THROWS_AS(a.add("w", Tensor::zeros({1})), ContractError);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("zero gradients leave parameters unchanged") {
    ParamSet p;
    p.add("x", Tensor({2}, {0.5, -0.25}));
    AdamState s = AdamState::for_params(p);
    const Tensor g[] = {Tensor::zeros({2})};
    adam_step(p, g, s, 0.1);
    CHECK(s.step_count == 1);
    CHECK(p[0].value[0] == 0.5);
    CHECK(p[0].value[1] == -0.25);
  }
  TEST_CASE("first bias-corrected step") {
    ParamSet p;
    p.add("x", Tensor::scalar(1.0));
    AdamState s = AdamState::for_params(p);
    const Tensor g[] = {Tensor::scalar(1.0)};
    adam_step(p, g, s, 0.1);
    CHECK(1.0 - p[0].value.item() == doctest::Approx(0.1 / (1 + 1e-8)).epsilon(1e-12));
  }
  TEST_CASE("converges on a quadratic") {
    ParamSet p;
    p.add("x", Tensor::scalar(1.0));
    AdamState s = AdamState::for_params(p);
    for (int i = 0; i < 100; ++i) {
      Tape tape;
      const auto bound = p.bind(&tape);
      const Tensor g[] = {tape.backward(square(bound[0])).of(bound[0])};
      adam_step(p, g, s, 0.05);
    }
    CHECK(std::fabs(p[0].value.item()) < 0.1);
  }
  TEST_CASE("mismatched gradients and invalid rates are rejected") {
    ParamSet p;
    p.add("x", Tensor::zeros({2}));
    AdamState s = AdamState::for_params(p);
    const Tensor wrong[] = {Tensor::zeros({3})};
    CHECK_THROWS_AS(adam_step(p, wrong, s, 0.1), ContractError);
    const Tensor ok[] = {Tensor::zeros({2})};
    CHECK_THROWS_AS(adam_step(p, ok, s, -1.0), ContractError);
    CHECK_THROWS_AS(adam_step(p, ok, s, std::nan("")), ContractError);
  }
}
