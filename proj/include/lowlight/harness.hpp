#pragma once

// Two-phase training (ESN, then BPN through the frozen ESN), evaluation,
// sequence processing, checkpoints and the finite-difference gradient suite.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowlight/autodiff/params.hpp"
#include "lowlight/bpn.hpp"
#include "lowlight/conditioning.hpp"
#include "lowlight/esn.hpp"
#include "lowlight/metrics.hpp"
#include "lowlight/synthcam.hpp"

namespace lowlight::harness {

using ad::Tensor;

struct TrainConfig {
  double alpha = 0.15;
  double lr_start = 2e-4;
  double lr_end = 1e-5;
  std::uint32_t esn_epochs = 40;
  std::uint32_t bpn_epochs = 15;
  std::uint32_t patch_size = 64;  // packed pixels; the BPN phase uses twice this
  std::uint32_t bpn_input_extent = 64;
  double validation_fraction = 0.2;
  std::uint64_t split_seed = 7;
  std::uint64_t esn_seed = 1;
  std::uint64_t bpn_seed = 2;
  std::uint32_t esn_depth = 3;
  std::uint32_t esn_base_channels = 16;
  std::filesystem::path train_dir;
  std::filesystem::path test_dir;

  void validate() const;
  std::uint32_t bpn_patch_size() const { return 2 * patch_size; }
  esn::EsnConfig esn_config() const;
  bpn::BpnConfig bpn_config() const;
};

/// Settings read by the CLI: data synthesis plus training.
struct RunConfig {
  synth::SynthConfig synth;
  std::size_t test_groups = 16;
  TrainConfig train;
};

/// Synthesis settings of the held-out test set: test_groups groups from a
/// seed disjoint from the training data.
synth::SynthConfig test_synth_config(const RunConfig& config);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `key = value` lines; '#' starts a comment. Unknown keys and malformed
/// values throw ConfigError naming the line.
void apply_config(RunConfig& config, const std::string& text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
/// 512 x 512 patches, 300 / 100 epochs.
void apply_paper_scale(RunConfig& config);
/// Canonical key = value listing of every setting.
std::string describe(const RunConfig& config);

/// lr_start at epoch 0, lr_end at the last epoch, log-linear in between.
double learning_rate(const TrainConfig& config, std::uint32_t epoch, std::uint32_t epochs);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
/// Group-wise split; at least one group stays in training.
Split split_groups(std::size_t groups, double validation_fraction, std::uint64_t seed);

/// Statistics over every eligible (input, ground truth) pair of `groups`.
cond::NormStats fit_stats(std::span<const synth::ImageGroup> groups);

struct TrainingProvenance {
  std::uint64_t split_seed = 0;
  std::uint64_t esn_seed = 0;
  std::uint64_t bpn_seed = 0;
  std::uint32_t esn_epochs = 0;
  std::uint32_t bpn_epochs = 0;
  double esn_final_train_mean = 0.0;
  double esn_final_train_std = 0.0;
  double esn_final_validation = 0.0;
  double bpn_final_train_mean = 0.0;
  bool operator==(const TrainingProvenance&) const = default;
};

struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  esn::EsnConfig esn_config;
  ad::ParamSet esn_params;
  std::optional<bpn::BpnConfig> bpn_config;
  ad::ParamSet bpn_params;
  cond::NormStats stats;
  TrainingProvenance provenance;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Rounds every parameter to single precision, the stored form.
ad::ParamSet to_stored_precision(const ad::ParamSet& params);

struct EpochLog {
  std::uint32_t epoch = 0;
  double learning_rate = 0.0;
  double train_mean = 0.0;
  double train_std = 0.0;
  double validation = 0.0;  // NaN without validation groups
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EsnRun {
  ad::ParamSet params;
  std::vector<EpochLog> log;
};

/// ESN phase on the training groups; validation loss is the mean L_ES over
/// every eligible pair of `validation` at a centered patch.
EsnRun train_esn(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                 const cond::NormStats& stats, const TrainConfig& config, std::ostream* progress = nullptr);

struct BpnRun {
  ad::ParamSet params;
  std::vector<EpochLog> log;  // validation: mean L_BP on held-out pairs
  double initial_log_time = 0.0;
};

/// BPN phase through the frozen ESN of `checkpoint`. Verifies the ESN digest
/// after every step.
BpnRun train_bpn(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                 const Checkpoint& checkpoint, const TrainConfig& config, std::ostream* progress = nullptr);

/// Regresses ln t_g directly from the BPN input (squared error in the log
/// domain); the comparison baseline for L_BP training.
BpnRun train_bpn_direct(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                        const Checkpoint& checkpoint, const TrainConfig& config, std::ostream* progress = nullptr);

struct Enhanced {
  Tensor rgb;  // (3, H, W) in (0, 1)
  double t1 = 0.0;
};

/// BPN on the full frame: channel-normalized packed raw resized (nearest) to
/// the BPN extent, with the pIEV planes.
double predict_t1(const raw::RawFrame& frame, const Checkpoint& checkpoint);
/// BPN then ESN on the full frame, whose extents must be multiples of
/// 2^(depth+1).
Enhanced evaluate(const raw::RawFrame& frame, const Checkpoint& checkpoint);
/// ESN only, with an explicit guideline time.
Tensor enhance_with_time(const raw::RawFrame& frame, const Checkpoint& checkpoint, double t1);

struct SequenceResult {
  std::vector<Tensor> frames;
  std::vector<double> t1_raw;
  std::vector<double> t1_filtered;
};
SequenceResult enhance_sequence(std::span<const raw::RawFrame> frames, const Checkpoint& checkpoint,
                                metrics::FilterMode mode, double beta);

/// Binary PPM (P6, maxval 255) of an RGB (3, H, W) image in [0, 1].
std::vector<std::uint8_t> encode_ppm(const Tensor& rgb);
void save_ppm(const std::filesystem::path& path, const Tensor& rgb);

struct GroupEvaluation {
  std::size_t group = 0;
  std::vector<std::size_t> inputs;  // eligible input indices
  std::vector<double> t0, t1;
  metrics::GroupStats pre, post;
};

/// Enhances every eligible input of each group with at least two of them and
/// compares brightness CV before and after.
std::vector<GroupEvaluation> evaluate_groups(std::span<const synth::ImageGroup> groups, const Checkpoint& checkpoint);

/// Mean over groups of Spearman(t0, predicted t1) across all 8 frames.
double t0_t1_association(std::span<const synth::ImageGroup> groups, const Checkpoint& checkpoint,
                         std::vector<double>* per_group = nullptr);

struct GradSuiteRow {
  std::string name;
  std::size_t instances = 0;
  double worst = 0.0;
  double bound = 0.0;
  bool passed() const { return worst < bound; }
};

/// Central-difference checks of every primitive and of L_MAE, L_SSIM, L_ES and
/// L_BP at `instances` random points each.
std::vector<GradSuiteRow> run_gradient_suite(std::size_t instances = 20, std::uint64_t seed = 0);

}  // namespace lowlight::harness
