#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "lowlight/autodiff/adam.hpp"
#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"
#include "lowlight/harness.hpp"

namespace lowlight::harness {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Network inputs for one (input frame, ground truth) pair at one crop.
struct Sample {
  Tensor packed;      // channel-normalized (4, s, s)
  Tensor piev;        // (6, s, s)
  Tensor target;      // reference RGB (3, 2s, 2s)
  Tensor bpn_packed;  // packed resized to the BPN extent (BPN phase only)
  Tensor bpn_piev;
  double t0 = 0.0, t_g = 0.0;
  std::size_t group = 0, frame = 0, oy = 0, ox = 0;
};

struct FrameImages {
  Tensor packed, rgb;
};

FrameImages images_of(const synth::TrainingPair& pair) {
  return {raw::pack_bayer(*pair.input), raw::raw_to_rgb_reference(*pair.target)};
}

Sample make_sample(const synth::TrainingPair& pair, const synth::Crop& crop, const cond::NormStats& stats,
                   std::size_t group, const bpn::BpnConfig* bpn_config) {
  Sample s;
  const std::size_t n = crop.packed.dim(1);
  s.packed = cond::normalize_packed(crop.packed, stats);
  s.piev = cond::normalize_and_broadcast(cond::build_piev(pair.input->meta), stats, n, n);
  s.target = crop.rgb;
  s.t0 = pair.t0;
  s.t_g = pair.t_g;
  s.group = group;
  s.frame = pair.input_index;
  s.oy = crop.offset_y;
  s.ox = crop.offset_x;
  if (bpn_config) {
    const std::size_t e = bpn_config->input_extent;
    s.bpn_packed = ad::resize_nearest(s.packed, e, e);
    s.bpn_piev = cond::normalize_and_broadcast(cond::build_piev(pair.input->meta), stats, e, e);
  }
  return s;
}

Sample random_sample(const synth::ImageGroup& g, std::size_t group, std::size_t size, std::mt19937_64& rng,
                     const cond::NormStats& stats, const bpn::BpnConfig* bpn_config) {
  const synth::TrainingPair pair = synth::sample_pair(g, rng);
  const FrameImages im = images_of(pair);
  return make_sample(pair, synth::random_crop(im.packed, im.rgb, size, rng), stats, group, bpn_config);
}

// Every eligible pair of the held-out groups at a centered crop.
std::vector<Sample> validation_samples(std::span<const synth::ImageGroup> groups, std::size_t size,
                                       const cond::NormStats& stats, const bpn::BpnConfig* bpn_config) {
  std::vector<Sample> out;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (std::size_t k : groups[gi].eligible_inputs()) {
      const synth::TrainingPair pair = synth::pair_at(groups[gi], k);
      const FrameImages im = images_of(pair);
      if (size > im.packed.dim(1) || size > im.packed.dim(2))
        throw ContractError("validation: patch " + std::to_string(size) + " exceeds the packed frame " +
                            ad::to_string(im.packed.shape()));
      const std::size_t oy = (im.packed.dim(1) - size) / 2;
      const std::size_t ox = (im.packed.dim(2) - size) / 2;
      out.push_back(make_sample(pair, synth::crop_at(im.packed, im.rgb, size, oy, ox), stats, gi, bpn_config));
    }
  return out;
}

std::string provenance(const Sample& s, std::uint32_t epoch) {
  std::ostringstream os;
  os << "epoch " << epoch + 1 << ", group " << s.group << ", input frame " << s.frame << " (t0 " << s.t0 << " s, t_g "
     << s.t_g << " s), crop at (" << s.oy << "," << s.ox << ")";
  return os.str();
}

Tensor esn_planes(const Sample& s, const cond::NormStats& stats) {
  const std::size_t n = s.packed.dim(1);
  return ad::concat_channels(s.piev, cond::t1_plane(Tensor::scalar(s.t_g), stats, n, n));
}

Tensor esn_loss(const Sample& s, const esn::EsnConfig& ec, std::span<const Tensor> params,
                const cond::NormStats& stats, double alpha) {
  return esn::loss_es(esn::esn_forward(ec, s.packed, esn_planes(s, stats), params), s.target, alpha);
}

// L_BP of one sample, with t1 from the (possibly recorded) BPN parameters.
Tensor bpn_loss(const Sample& s, const Checkpoint& ckpt, const bpn::BpnConfig& bc, std::span<const Tensor> bpn_params,
                std::span<const Tensor> esn_params) {
  const Tensor t1 = bpn::bpn_forward(bc, s.bpn_packed, s.bpn_piev, bpn_params);
  const std::size_t n = s.packed.dim(1);
  const Tensor planes = ad::concat_channels(s.piev, cond::t1_plane(t1, ckpt.stats, n, n));
  const Tensor est = esn::esn_forward(ckpt.esn_config, s.packed, planes, esn_params);
  const Tensor weights = bpn::aoi_weight_map(raw::rgb_to_gray(s.target), bc.mu_w, bc.sigma_w_sq);
  return bpn::loss_bp(raw::rgb_to_gray(est), weights, bc.mu_w, bc.sigma_v_sq);
}

Tensor direct_loss(const Sample& s, const bpn::BpnConfig& bc, std::span<const Tensor> bpn_params) {
  const Tensor z = bpn::bpn_logit(bc, s.bpn_packed, s.bpn_piev, bpn_params);
  return ad::square(ad::add_scalar(z, -std::log(s.t_g)));
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return {std::nan(""), std::nan("")};
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

void require_groups(std::span<const synth::ImageGroup> train, const char* who) {
  if (train.empty()) throw ContractError(std::string(who) + ": need at least one training group");
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].eligible_inputs().empty())
      throw ContractError(std::string(who) + ": training group " + std::to_string(i) + " has no eligible input");
}

void report(std::ostream* os, const char* phase, const EpochLog& e, std::uint32_t epochs, double seconds) {
  if (!os) return;
  *os << phase << " epoch " << e.epoch + 1 << "/" << epochs << "  lr " << e.learning_rate << "  train "
      << e.train_mean << " (sd " << e.train_std << ")  validation " << e.validation << "  [" << seconds << " s]"
      << std::endl;
}

double mean_log_tg(std::span<const synth::ImageGroup> train) {
  double s = 0.0;
  for (const auto& g : train) s += std::log(g.t_g());
  return s / static_cast<double>(train.size());
}

using LossFn = std::function<Tensor(const Sample&, std::span<const Tensor>)>;

// Shared loop for the two BPN objectives.
BpnRun run_bpn_phase(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                     const Checkpoint& ckpt, const TrainConfig& config, std::ostream* progress, const char* phase,
                     const LossFn& loss_of, bool freeze_check) {
  config.validate();
  require_groups(train, phase);
  const bpn::BpnConfig bc = config.bpn_config();
  const std::size_t size = config.bpn_patch_size();
  const std::uint64_t esn_digest = ckpt.esn_params.digest();

  BpnRun run;
  run.initial_log_time = mean_log_tg(train);
  run.params = bpn::bpn_init(bc, config.bpn_seed, run.initial_log_time);
  ad::AdamState adam = ad::AdamState::for_params(run.params);
  std::mt19937_64 rng(mix(config.bpn_seed, 0xb9));
  const std::vector<Sample> held_out = validation_samples(validation, size, ckpt.stats, &bc);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::uint32_t epoch = 0; epoch < config.bpn_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = learning_rate(config, epoch, config.bpn_epochs);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    for (std::size_t gi : order) {
      const Sample s = random_sample(train[gi], gi, size, rng, ckpt.stats, &bc);
      ad::Tape tape;
      const std::vector<Tensor> params = run.params.bind(&tape);
      const Tensor loss = loss_of(s, params);
      if (!std::isfinite(loss.item()))
        throw TrainingError(std::string(phase) + ": non-finite loss at " + provenance(s, epoch));
      const ad::Gradients grads = tape.backward(loss);
      std::vector<Tensor> g;
      g.reserve(params.size());
      for (const Tensor& p : params) g.push_back(grads.of(p));
      ad::adam_step(run.params, g, adam, lr);
      if (freeze_check && ckpt.esn_params.digest() != esn_digest)
        throw std::logic_error("train_bpn: frozen ESN parameters changed");
      losses.push_back(loss.item());
    }
    std::vector<double> val;
    const std::vector<Tensor> frozen = run.params.bind(nullptr);
    for (const Sample& s : held_out) val.push_back(loss_of(s, frozen).item());
    const MeanStd m = mean_std(losses);
    run.log.push_back({epoch, lr, m.mean, m.std, mean_std(val).mean});
    report(progress, phase, run.log.back(),  config.bpn_epochs,
           std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return run;
}

}  // namespace

Split split_groups(std::size_t groups, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ContractError("split: fraction must be in [0, 1)");
  std::vector<std::size_t> ids(groups);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(groups)));
  if (groups > 0 && n_val >= groups) n_val = groups - 1;
  Split s;
  s.validation.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

cond::NormStats fit_stats(std::span<const synth::ImageGroup> groups) {
  std::vector<Tensor> packed;
  std::vector<cond::Iev> ievs;
  for (const auto& g : groups)
    for (std::size_t k : g.eligible_inputs()) {
      packed.push_back(raw::pack_bayer(g.frames[k]));
      ievs.push_back(cond::build_iev(g.frames[k].meta, g.t_g()));
    }
  std::vector<cond::NormSample> samples(packed.size());
  for (std::size_t i = 0; i < packed.size(); ++i) samples[i] = {&packed[i], ievs[i]};
  return cond::fit_norm_stats(samples);
}

EsnRun train_esn(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                 const cond::NormStats& stats, const TrainConfig& config, std::ostream* progress) {
  config.validate();
  require_groups(train, "train_esn");
  const esn::EsnConfig ec = config.esn_config();
  const std::size_t size = config.patch_size;

  EsnRun run;
  run.params = esn::esn_init(ec, config.esn_seed);
  ad::AdamState adam = ad::AdamState::for_params(run.params);
  std::mt19937_64 rng(mix(config.esn_seed, 0xe5));
  const std::vector<Sample> held_out = validation_samples(validation, size, stats, nullptr);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::uint32_t epoch = 0; epoch < config.esn_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = learning_rate(config, epoch, config.esn_epochs);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> losses;
    for (std::size_t gi : order) {
      const Sample s = random_sample(train[gi], gi, size, rng, stats, nullptr);
      ad::Tape tape;
      const std::vector<Tensor> params = run.params.bind(&tape);
      const Tensor loss = esn_loss(s, ec, params, stats, config.alpha);
      if (!std::isfinite(loss.item())) throw TrainingError("train_esn: non-finite loss at " + provenance(s, epoch));
      const ad::Gradients grads = tape.backward(loss);
      std::vector<Tensor> g;
      g.reserve(params.size());
      for (const Tensor& p : params) g.push_back(grads.of(p));
      ad::adam_step(run.params, g, adam, lr);
      losses.push_back(loss.item());
    }
    std::vector<double> val;
    const std::vector<Tensor> frozen = run.params.bind(nullptr);
    for (const Sample& s : held_out) val.push_back(esn_loss(s, ec, frozen, stats, config.alpha).item());
    const MeanStd m = mean_std(losses);
    run.log.push_back({epoch, lr, m.mean, m.std, mean_std(val).mean});
    report(progress, "esn", run.log.back(), config.esn_epochs,
           std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return run;
}

BpnRun train_bpn(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                 const Checkpoint& checkpoint, const TrainConfig& config, std::ostream* progress) {
  if (checkpoint.esn_config != config.esn_config())
    throw ContractError("train_bpn: checkpoint ESN architecture differs from the config");
  const bpn::BpnConfig bc = config.bpn_config();
  // Frozen: bound without a tape, so no gradient can reach them.
  const std::vector<Tensor> esn_params = checkpoint.esn_params.bind(nullptr);
  auto loss = [&](const Sample& s, std::span<const Tensor> p) { return bpn_loss(s, checkpoint, bc, p, esn_params); };
  return run_bpn_phase(train, validation, checkpoint, config, progress, "bpn", loss, true);
}

BpnRun train_bpn_direct(std::span<const synth::ImageGroup> train, std::span<const synth::ImageGroup> validation,
                        const Checkpoint& checkpoint, const TrainConfig& config, std::ostream* progress) {
  const bpn::BpnConfig bc = config.bpn_config();
  auto loss = [&](const Sample& s, std::span<const Tensor> p) { return direct_loss(s, bc, p); };
  return run_bpn_phase(train, validation, checkpoint, config, progress, "bpn-direct", loss, false);
}

}  // namespace lowlight::harness
