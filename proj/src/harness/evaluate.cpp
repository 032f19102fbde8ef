#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"
#include "lowlight/harness.hpp"

namespace lowlight::harness {
namespace {

void require_bpn(const Checkpoint& c) {
  if (!c.bpn_config)
    throw ContractError(
        "checkpoint has no BPN; train it with train-bpn or run the ESN alone with an explicit t1 (enhance --t1 <seconds>)");
}

void require_extent(const raw::RawFrame& f, const Checkpoint& c) {
  const std::size_t align = std::size_t{2} << c.esn_config.depth;
  if (f.width % align || f.height % align)
    throw ContractError("evaluate: frame " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                        " must have sides divisible by " + std::to_string(align));
}

}  // namespace

double predict_t1(const raw::RawFrame& frame, const Checkpoint& c) {
  require_bpn(c);
  const bpn::BpnConfig& bc = *c.bpn_config;
  const std::size_t e = bc.input_extent;
  const Tensor packed = ad::resize_nearest(cond::normalize_packed(raw::pack_bayer(frame), c.stats), e, e);
  const Tensor piev = cond::normalize_and_broadcast(cond::build_piev(frame.meta), c.stats, e, e);
  const std::vector<Tensor> params = c.bpn_params.bind(nullptr);
  return bpn::bpn_forward(bc, packed, piev, params).item();
}

Tensor enhance_with_time(const raw::RawFrame& frame, const Checkpoint& c, double t1) {
  if (!(t1 > 0.0) || !std::isfinite(t1)) throw ContractError("enhance: t1 must be positive");
  require_extent(frame, c);
  const Tensor packed = cond::normalize_packed(raw::pack_bayer(frame), c.stats);
  const std::size_t h = packed.dim(1), w = packed.dim(2);
  const Tensor planes = cond::normalize_and_broadcast(cond::build_iev(frame.meta, t1), c.stats, h, w);
  const std::vector<Tensor> params = c.esn_params.bind(nullptr);
  return esn::esn_forward(c.esn_config, packed, planes, params);
}

Enhanced evaluate(const raw::RawFrame& frame, const Checkpoint& c) {
  require_bpn(c);
  require_extent(frame, c);
  Enhanced out;
  out.t1 = predict_t1(frame, c);
  out.rgb = enhance_with_time(frame, c, out.t1);
  return out;
}

SequenceResult enhance_sequence(std::span<const raw::RawFrame> frames, const Checkpoint& c, metrics::FilterMode mode,
                                double beta) {
  if (frames.empty()) throw ContractError("enhance_sequence: need at least one frame");
  require_bpn(c);
  SequenceResult r;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    try {
      const Enhanced e = evaluate(frames[i], c);
      r.frames.push_back(e.rgb);
      r.t1_raw.push_back(e.t1);
    } catch (const std::exception& ex) {
      throw std::runtime_error("enhance_sequence: frame " + std::to_string(i) + ": " + ex.what());
    }
  }
  r.t1_filtered = metrics::t1_filter(r.t1_raw, mode, beta);
  if (mode != metrics::FilterMode::identity)
    for (std::size_t i = 0; i < frames.size(); ++i)
      if (r.t1_filtered[i] != r.t1_raw[i]) r.frames[i] = enhance_with_time(frames[i], c, r.t1_filtered[i]);
  return r;
}

std::vector<GroupEvaluation> evaluate_groups(std::span<const synth::ImageGroup> groups, const Checkpoint& c) {
  std::vector<GroupEvaluation> out;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto inputs = groups[gi].eligible_inputs();
    if (inputs.size() < 2) continue;
    GroupEvaluation ge;
    ge.group = gi;
    ge.inputs = inputs;
    std::vector<double> pre, post;
    for (std::size_t k : inputs) {
      const raw::RawFrame& f = groups[gi].frames[k];
      const Enhanced e = evaluate(f, c);
      ge.t0.push_back(f.meta.exposure_time);
      ge.t1.push_back(e.t1);
      pre.push_back(raw::brightness(raw::raw_to_rgb_reference(f)));
      post.push_back(raw::brightness(e.rgb));
    }
    const std::string id = "group_" + std::to_string(gi);
    ge.pre = metrics::group_brightness_stats_of(pre, id);
    ge.post = metrics::group_brightness_stats_of(post, id);
    out.push_back(std::move(ge));
  }
  return out;
}

double t0_t1_association(std::span<const synth::ImageGroup> groups, const Checkpoint& c,
                         std::vector<double>* per_group) {
  if (groups.empty()) throw ContractError("t0_t1_association: no groups");
  double total = 0.0;
  for (const auto& g : groups) {
    std::vector<double> t0, t1;
    for (const auto& f : g.frames) {
      t0.push_back(f.meta.exposure_time);
      t1.push_back(predict_t1(f, c));
    }
    const double rho = metrics::spearman(t0, t1);
    if (per_group) per_group->push_back(rho);
    total += rho;
  }
  return total / static_cast<double>(groups.size());
}

std::vector<std::uint8_t> encode_ppm(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ContractError("ppm: expected (3,H,W), got " + ad::to_string(rgb.shape()));
  const std::size_t h = rgb.dim(1), w = rgb.dim(2), n = h * w;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(rgb[c * n + i], 0.0, 1.0) * 255.0)));
  return out;
}

void save_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  const auto bytes = encode_ppm(rgb);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("save_ppm: cannot write " + path.string());
}

}  // namespace lowlight::harness
