#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "lowlight/error.hpp"
#include "lowlight/synthcam.hpp"

using namespace lowlight;
using namespace lowlight::synth;

namespace {

raw::ExifMeta test_meta() {
  raw::ExifMeta m;
  m.iso = 800.0f;
  m.wb_gains = {2.0f, 1.0f, 1.6f, 1.0f};
  m.aperture = 2.8f;
  return m;
}

SensorModel noiseless() {
  SensorModel s;
  s.read_noise_sd = 0.0;
  s.shot_noise_gain = 0.0;
  return s;
}

SynthConfig small_config() {
  SynthConfig c;
  c.groups = 3;
  c.raw_extent = 96;
  c.seed = 11;
  return c;
}

// Group with only metadata filled in, for sampler tests.
ImageGroup meta_group(std::size_t gt, std::set<std::size_t> invalid) {
  ImageGroup g;
  const auto times = exposure_sweep(0.5);
  for (std::size_t k = 0; k < kGroupSize; ++k) g.frames[k].meta.exposure_time = static_cast<float>(times[k]);
  g.gt_index = gt;
  g.invalid = std::move(invalid);
  return g;
}

ad::Tensor iota(ad::Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return ad::Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("synth_scene is deterministic per seed and differs across seeds") {
  const Scene a = synth_scene(5, 64, 64);
  const Scene b = synth_scene(5, 64, 64);
  const Scene c = synth_scene(6, 64, 64);
  const auto va = a.irradiance.values(), vb = b.irradiance.values(), vc = c.irradiance.values();
  CHECK(std::equal(va.begin(), va.end(), vb.begin(), vb.end()));
  CHECK_FALSE(std::equal(va.begin(), va.end(), vc.begin(), vc.end()));
}

TEST_CASE("synth_scene rejects small or odd extents") {
  CHECK_THROWS_AS(synth_scene(1, 30, 64), ContractError);
  CHECK_THROWS_AS(synth_scene(1, 64, 33), ContractError);
  CHECK_THROWS_AS(synth_scene(1, 64, 64, 0.0), ContractError);
}

TEST_CASE("scene irradiance is non-negative and spans at least three decades") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Scene s = synth_scene(seed, 128, 128, 0.3);
    const auto v = s.irradiance.values();
    CHECK(*std::min_element(v.begin(), v.end()) > 0.0);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    CHECK(std::log10(*hi / *lo) >= 3.0);
  }
}

TEST_CASE("brightest region saturates at t_max and the darkest stays near black") {
  const SynthConfig cfg = small_config();
  const ImageGroup g = generate_group(cfg, 0);
  const raw::RawFrame& first = g.frames[0];
  const double range = first.white_level - first.black_level;
  const auto [lo, hi] = std::minmax_element(first.counts.begin(), first.counts.end());
  CHECK(*hi >= first.black_level + 0.99 * range);
  CHECK(*lo <= first.black_level + 0.01 * range);
}

TEST_CASE("exposure law: doubling t shifts ln E by ln 2") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(1e-4, 50.0), t(1e-4, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double R = r(rng), T = t(rng);
    CHECK(std::fabs(std::log(exposure(R, 2 * T)) - (std::log(exposure(R, T)) + std::log(2.0))) <= 1e-12);
  }
}

TEST_CASE("response is the logistic in log exposure") {
  const SensorModel s;
  CHECK(s.response(0.0) == 0.0);
  CHECK(s.response(std::exp(s.crf_b)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.exposure_for(s.response(0.37)) == doctest::Approx(0.37).epsilon(1e-12));
  const double e = 1.7;
  CHECK(s.response(e) == doctest::Approx(1.0 / (1.0 + std::exp(-s.crf_a * (std::log(e) - s.crf_b)))).epsilon(1e-15));
}

TEST_CASE("zero irradiance without noise gives black counts") {
  Scene s{ad::Tensor::zeros({3, 32, 32}), 0};
  const raw::RawFrame f = expose(s, 0.1, noiseless(), test_meta(), 1);
  for (std::uint16_t c : f.counts) CHECK(c == f.black_level);
}

TEST_CASE("expose rejects non-positive times") {
  const Scene s = synth_scene(1, 32, 32);
  CHECK_THROWS_AS(expose(s, 0.0, noiseless(), test_meta(), 1), ContractError);
  CHECK_THROWS_AS(expose(s, -1.0, noiseless(), test_meta(), 1), ContractError);
}

TEST_CASE("noiseless counts and brightness are monotone in t") {
  const Scene s = synth_scene(9, 64, 64, 0.5);
  const auto meta = test_meta();
  raw::RawFrame prev = expose(s, 1e-3, noiseless(), meta, 0);
  double prev_b = raw::brightness(raw::raw_to_rgb_reference(prev));
  for (double t = 2e-3; t < 20.0; t *= 1.7) {
    const raw::RawFrame f = expose(s, t, noiseless(), meta, 0);
    bool monotone = true;
    for (std::size_t i = 0; i < f.counts.size(); ++i) monotone = monotone && f.counts[i] >= prev.counts[i];
    CHECK(monotone);
    const double b = raw::brightness(raw::raw_to_rgb_reference(f));
    CHECK(b >= prev_b);
    prev = f;
    prev_b = b;
  }
}

TEST_CASE("noisy counts match the analytic mean per site") {
  // Uniform irradiance on a small sensor; every draw uses a fresh noise seed.
  const std::size_t n = 32;
  const double R = 0.8, t = 0.3;
  Scene s{ad::Tensor::full({3, n, n}, R), 0};
  raw::ExifMeta meta = test_meta();
  meta.wb_gains = {1.0f, 1.0f, 1.0f, 1.0f};
  const SensorModel model;
  const double range = model.white_level - model.black_level;
  const double br = model.response(R * t);
  const double mean = model.black_level + br * range;
  const double sd = std::sqrt(model.read_noise_sd * model.read_noise_sd + model.shot_noise_gain * br * range);

  const std::size_t sites[] = {0, 33, 517, n * n - 1};
  std::vector<double> sum(std::size(sites), 0.0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const raw::RawFrame f = expose(s, t, model, meta, 1000 + static_cast<std::uint64_t>(d));
    for (std::size_t i = 0; i < std::size(sites); ++i) sum[i] += f.counts[sites[i]];
  }
  const double se = sd / std::sqrt(static_cast<double>(draws));
  for (std::size_t i = 0; i < std::size(sites); ++i) CHECK(std::fabs(sum[i] / draws - mean) < 3.0 * se);
}

TEST_CASE("exposure_sweep is geometric and descending") {
  const auto t = exposure_sweep(0.5, 125.0);
  CHECK(t[0] == 0.5);
  CHECK(t[7] == doctest::Approx(0.004).epsilon(1e-12));
  for (std::size_t k = 1; k < kGroupSize; ++k) CHECK(t[k] / t[k - 1] == doctest::Approx(t[1] / t[0]));
  CHECK_THROWS_AS(exposure_sweep(0.0), ContractError);
  CHECK_THROWS_AS(exposure_sweep(1.0, 1.0), ContractError);
}

TEST_CASE("mid-illumination sweep from 1/2 s to 1/250 s puts the ground truth in the brighter half") {
  const Scene s = synth_scene(21, 128, 128, 1.0);
  const ImageGroup g = make_group(s, SensorModel{}, test_meta(), exposure_sweep(0.5, 125.0), 4);
  CHECK(g.gt_index < 4);
  CHECK_FALSE(g.invalid.count(g.gt_index));

  // Selection rule re-derived from the frames.
  const SelectionRule rule;
  std::size_t best = kGroupSize;
  double best_d = 1e9;
  for (std::size_t k = 0; k < kGroupSize; ++k) {
    const auto rgb = raw::raw_to_rgb_reference(g.frames[k]);
    const double b = raw::brightness(rgb);
    if (b < rule.invalid_below || raw::saturated_fraction(rgb, rule.saturation_level) >= rule.max_saturated_fraction)
      continue;
    if (std::fabs(b - rule.target_brightness) < best_d) {
      best_d = std::fabs(b - rule.target_brightness);
      best = k;
    }
  }
  CHECK(g.gt_index == best);
}

TEST_CASE("a dark enough last frame is tagged invalid") {
  const Scene s = synth_scene(21, 128, 128, 1.0);
  const ImageGroup g = make_group(s, noiseless(), test_meta(), exposure_sweep(0.5, 125.0), 4);
  CHECK(raw::brightness(raw::raw_to_rgb_reference(g.frames[7])) < 0.02);
  CHECK(g.invalid.count(7));
  CHECK_FALSE(g.invalid.count(g.gt_index));
}

TEST_CASE("make_group rejects bad times and unusable groups") {
  const Scene s = synth_scene(2, 64, 64, 1.0);
  auto times = exposure_sweep(0.5);
  std::swap(times[2], times[3]);
  CHECK_THROWS_AS(make_group(s, SensorModel{}, test_meta(), times, 0), ContractError);
  // Everything saturated: no frame qualifies.
  CHECK_THROWS_AS(make_group(s, SensorModel{}, test_meta(), exposure_sweep(5e4, 2.0), 0), GroupRejected);
}

TEST_CASE("generated groups satisfy the group invariants and are deterministic") {
  const SynthConfig cfg = small_config();
  const auto groups = generate_dataset(cfg);
  REQUIRE(groups.size() == cfg.groups);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const ImageGroup& g = groups[i];
    for (std::size_t k = 1; k < kGroupSize; ++k) {
      CHECK(g.frames[k].meta.exposure_time < g.frames[k - 1].meta.exposure_time);
      CHECK(g.frames[k].meta.iso == g.frames[0].meta.iso);
      CHECK(g.frames[k].meta.wb_gains == g.frames[0].meta.wb_gains);
    }
    CHECK_FALSE(g.invalid.count(g.gt_index));
    CHECK_FALSE(g.eligible_inputs().empty());
    const ImageGroup again = generate_group(cfg, i);
    CHECK(again.frames == g.frames);
    CHECK(again.gt_index == g.gt_index);
    CHECK(again.invalid == g.invalid);
  }
}

TEST_CASE("sample_pair draws uniformly over the eligible frames") {
  const ImageGroup g = meta_group(2, {7});
  CHECK(g.eligible_inputs() == std::vector<std::size_t>{3, 4, 5, 6});
  std::mt19937_64 rng(17);
  std::array<int, kGroupSize> counts{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const TrainingPair p = sample_pair(g, rng);
    CHECK(p.t0 < p.t_g);
    CHECK(p.target == &g.frames[2]);
    ++counts[p.input_index];
  }
  CHECK(counts[0] + counts[1] + counts[2] + counts[7] == 0);
  double chi2 = 0.0;
  const double expected = draws / 4.0;
  for (std::size_t k = 3; k <= 6; ++k) chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  CHECK(chi2 < 11.345);  // chi-square, 3 dof, p = 0.01
}

TEST_CASE("sample_pair fails without eligible frames") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(sample_pair(meta_group(7, {}), rng), PairSamplingError);
  CHECK_THROWS_AS(sample_pair(meta_group(5, {6, 7}), rng), PairSamplingError);
  CHECK_THROWS_AS(pair_at(meta_group(2, {7}), 7), PairSamplingError);
  CHECK_THROWS_AS(pair_at(meta_group(2, {7}), 1), PairSamplingError);
}

TEST_CASE("crops are aligned index windows") {
  const ad::Tensor packed = iota({4, 10, 12});
  const ad::Tensor rgb = iota({3, 20, 24});
  const Crop zero = crop_at(packed, rgb, 4, 0, 0);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) CHECK(zero.packed[(c * 4 + y) * 4 + x] == packed[(c * 10 + y) * 12 + x]);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Crop k = random_crop(packed, rgb, 6, rng);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x)
          CHECK(k.packed[(c * 6 + y) * 6 + x] == packed[(c * 10 + y + k.offset_y) * 12 + x + k.offset_x]);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 12; ++y)
        for (std::size_t x = 0; x < 12; ++x)
          CHECK(k.rgb[(c * 12 + y) * 12 + x] == rgb[(c * 20 + y + 2 * k.offset_y) * 24 + x + 2 * k.offset_x]);
  }
  CHECK_THROWS_AS(random_crop(packed, rgb, 12, rng), ContractError);
  CHECK_THROWS_AS(crop_at(packed, rgb, 5, 0, 0), ContractError);
  CHECK_THROWS_AS(crop_at(packed, rgb, 4, 7, 0), ContractError);
  CHECK_THROWS_AS(crop_at(packed, ad::Tensor::zeros({3, 20, 20}), 4, 0, 0), ContractError);
}

TEST_CASE("dataset directories round-trip") {
  const auto root = std::filesystem::temp_directory_path() / "lowlight_test_synthcam";
  std::filesystem::remove_all(root);
  SynthConfig cfg = small_config();
  cfg.groups = 2;
  cfg.raw_extent = 48;
  const auto groups = generate_dataset(cfg);
  write_dataset(root, groups);
  CHECK(std::filesystem::exists(root / "group_0001" / "frame_7.cidraw"));
  const auto back = read_dataset(root);
  REQUIRE(back.size() == groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(back[i].frames == groups[i].frames);
    CHECK(back[i].gt_index == groups[i].gt_index);
    CHECK(back[i].invalid == groups[i].invalid);
  }

  // A manifest naming the ground truth as invalid is rejected.
  {
    std::ofstream os(root / "group_0000" / "manifest.txt");
    os << "gt_index=3\ninvalid=3,7\n";
  }
  CHECK_THROWS_AS(read_group(root / "group_0000"), ValidationError);
  std::filesystem::remove_all(root);
}
