// Times the parallel kernels against the serial reference on the layer shapes
// the networks actually run.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "lowlight/kernels.hpp"

namespace k = lowlight::kernels;

namespace {

double seconds(const std::function<void()>& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / reps;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void bench_conv(const char* label, k::ConvGeometry g, bool with_serial) {
  std::mt19937_64 rng(7);
  const auto in = random_vector(g.input_size(), rng);
  const auto w = random_vector(g.weight_size(), rng);
  const auto b = random_vector(g.out_channels, rng);
  const auto go = random_vector(g.output_size(), rng);
  std::vector<double> out(g.output_size()), gi(g.input_size()), gw(g.weight_size()), gb(g.out_channels);
  const double flops = 2.0 * static_cast<double>(g.output_size()) * g.in_channels * g.kernel * g.kernel;

  const int reps = 3;
  const double fwd = seconds([&] { k::conv2d_forward(g, in, w, b, out); }, reps);
  const double bwi = seconds([&] { k::conv2d_backward_input(g, go, w, gi); }, reps);
  const double bww = seconds([&] { k::conv2d_backward_weight(g, in, go, gw, gb); }, reps);
  std::printf("%-28s parallel  fwd %8.3f ms (%5.1f GF/s)  bwd-in %8.3f ms  bwd-w %8.3f ms\n", label,
              fwd * 1e3, flops / fwd * 1e-9, bwi * 1e3, bww * 1e3);
  if (with_serial) {
    const double sf = seconds([&] { k::serial::conv2d_forward(g, in, w, b, out); }, 1);
    const double si = seconds([&] { k::serial::conv2d_backward_input(g, go, w, gi); }, 1);
    const double sw = seconds([&] { k::serial::conv2d_backward_weight(g, in, go, gw, gb); }, 1);
    std::printf("%-28s serial    fwd %8.3f ms (%5.1f GF/s)  bwd-in %8.3f ms  bwd-w %8.3f ms\n", label,
                sf * 1e3, flops / sf * 1e-9, si * 1e3, sw * 1e3);
  }
}

k::ConvGeometry conv(std::size_t c, std::size_t o, std::size_t hw, std::size_t stride = 1) {
  k::ConvGeometry g;
  g.in_channels = c;
  g.out_channels = o;
  g.height = g.width = hw;
  g.stride = stride;
  return g;
}

}  // namespace

int main() {
  std::printf("threads: %d\n", k::max_threads());
  bench_conv("esn enc0 11->16 @64", conv(11, 16, 64), true);
  bench_conv("esn enc0 16->16 @64", conv(16, 16, 64), true);
  bench_conv("esn dec0 32->16 @64", conv(32, 16, 64), true);
  bench_conv("esn enc2 64->64 @16", conv(64, 64, 16), true);
  bench_conv("esn mid 128->128 @8", conv(128, 128, 8), true);
  bench_conv("esn dec2 128->64 @16", conv(128, 64, 16), false);
  bench_conv("esn dec0 32->16 @128", conv(32, 16, 128), false);
  bench_conv("bpn s1 10->16 @64 /2", conv(10, 16, 64, 2), true);

  std::mt19937_64 rng(3);
  const std::size_t c = 3, h = 128, w = 128, r = 5;
  std::vector<double> table_r((2 * r + 1) * h, 1.0 / 11), table_c((2 * r + 1) * w, 1.0 / 11);
  const k::BlurTable rt{h, r, table_r}, ct{w, r, table_c};
  const auto img = random_vector(c * h * w, rng);
  std::vector<double> out(img.size());
  const double pb = seconds([&] { k::gaussian_blur(c, rt, ct, img, out); }, 10);
  const double sb = seconds([&] { k::serial::gaussian_blur(c, rt, ct, img, out); }, 2);
  std::printf("gaussian_blur 3x128x128 r5       parallel %8.3f ms  serial %8.3f ms\n", pb * 1e3, sb * 1e3);
}
