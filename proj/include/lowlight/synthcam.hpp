#pragma once

// Synthetic multi-exposure raw groups: procedural irradiance scenes, the
// exposure law E = R * t, a logistic camera response in log-exposure, Gaussian
// read + shot noise, 8-frame groups with rule-selected ground truth, and the
// training-pair sampler.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"
#include "lowlight/rawproc.hpp"

namespace lowlight::synth {

using ad::Tensor;

inline constexpr std::size_t kGroupSize = 8;

/// Irradiance per color plane at full sensor resolution, (3, H, W), >= 0.
struct Scene {
  Tensor irradiance;
  std::uint64_t seed = 0;
  std::size_t height() const { return irradiance.dim(1); }
  std::size_t width() const { return irradiance.dim(2); }
};

struct SensorModel {
  double crf_a = 2.0;  // logistic slope in ln-exposure
  double crf_b = 0.0;  // ln-exposure at half response
  double read_noise_sd = 6.0;      // counts
  double shot_noise_gain = 2.0;    // counts per count of signal
  std::uint16_t black_level = 512;
  std::uint16_t white_level = 16383;

  void validate() const;
  /// Br(E) = 1 / (1 + exp(-a (ln E - b))), Br(0) = 0.
  double response(double exposure) const;
  /// Exposure at which the response reaches `br` (inverse of response()).
  double exposure_for(double br) const;
};

/// E = R * t.
inline double exposure(double irradiance, double t) { return irradiance * t; }

/// `illumination` sets the median irradiance of the scene.
Scene synth_scene(std::uint64_t seed, std::size_t height, std::size_t width, double illumination = 1.0);

/// Per-site CFA irradiance the sensor integrates: the site's color plane,
/// divided by that channel's white-balance gain (gains undo the sensitivity).
double site_irradiance(const Scene& scene, const raw::ExifMeta& meta, std::size_t y, std::size_t x);

/// Renders one raw frame at time t. Noise is skipped when both noise
/// parameters are zero.
raw::RawFrame expose(const Scene& scene, double t, const SensorModel& model, const raw::ExifMeta& meta,
                     std::uint64_t noise_seed);

struct SelectionRule {
  double target_brightness = 0.40;
  double max_saturated_fraction = 0.02;
  double saturation_level = 0.99;   // reference RGB channel value counted as saturated
  double invalid_below = 0.02;      // "nothing but noise"
};

struct ImageGroup {
  std::array<raw::RawFrame, kGroupSize> frames;
  std::size_t gt_index = 0;
  std::set<std::size_t> invalid;

  double t_g() const { return frames[gt_index].meta.exposure_time; }
  /// Indices usable as low-light inputs: after the ground truth and not invalid.
  std::vector<std::size_t> eligible_inputs() const;
};

class GroupRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ImageGroup make_group(const Scene& scene, const SensorModel& model, const raw::ExifMeta& meta,
                      const std::array<double, kGroupSize>& times, std::uint64_t noise_seed,
                      const SelectionRule& rule = {});

/// Applies the selection rule to already rendered frames (checks invariants).
void select_ground_truth(ImageGroup& group, const SelectionRule& rule);

/// Eight times geometrically spaced from t_max down to t_max / ratio.
std::array<double, kGroupSize> exposure_sweep(double t_max, double ratio = 125.0);

struct TrainingPair {
  const raw::RawFrame* input = nullptr;
  const raw::RawFrame* target = nullptr;
  std::size_t input_index = 0;
  double t0 = 0.0;
  double t_g = 0.0;
};

class PairSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainingPair sample_pair(const ImageGroup& group, std::mt19937_64& rng);
TrainingPair pair_at(const ImageGroup& group, std::size_t input_index);

struct Crop {
  Tensor packed;  // (4, size, size)
  Tensor rgb;     // (3, 2 size, 2 size)
  std::size_t offset_y = 0, offset_x = 0;  // in packed pixels
};

Crop crop_at(const Tensor& packed, const Tensor& rgb, std::size_t size, std::size_t oy, std::size_t ox);
Crop random_crop(const Tensor& packed, const Tensor& rgb, std::size_t size, std::mt19937_64& rng);

// --- dataset generation and the on-disk layout -------------------------------

struct SynthConfig {
  std::size_t groups = 48;
  std::size_t raw_extent = 320;          // square, sensor pixels
  std::uint64_t seed = 1;
  double illumination_min = 0.05;        // scene illumination, log-uniform
  double illumination_max = 5.0;
  double t_max_at_unit_illumination = 1.0;
  double t_max_jitter = 0.9;             // ln-scale half-width of the t_max jitter
  double sweep_ratio = 125.0;
  std::array<double, 4> iso_choices{400, 800, 1600, 3200};
  double iso_reference = 800;            // shot noise scales with iso / iso_reference
  SensorModel sensor;
  SelectionRule rule;
};

/// Deterministic in (config.seed, index); re-draws the scene when a group is
/// rejected by the selection rule.
ImageGroup generate_group(const SynthConfig& config, std::size_t index);
std::vector<ImageGroup> generate_dataset(const SynthConfig& config);

void write_group(const std::filesystem::path& dir, const ImageGroup& group);
ImageGroup read_group(const std::filesystem::path& dir);
/// Writes group_<NNNN> directories under root.
void write_dataset(const std::filesystem::path& root, const std::vector<ImageGroup>& groups);
std::vector<ImageGroup> read_dataset(const std::filesystem::path& root);

}  // namespace lowlight::synth
