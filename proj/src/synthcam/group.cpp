#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/error.hpp"
#include "lowlight/synthcam.hpp"

namespace lowlight::synth {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

void check_group(const ImageGroup& g) {
  for (std::size_t k = 1; k < kGroupSize; ++k)
    if (!(g.frames[k].meta.exposure_time < g.frames[k - 1].meta.exposure_time))
      throw ValidationError("group: exposure times must be strictly descending");
  for (std::size_t k = 1; k < kGroupSize; ++k) {
    const auto& a = g.frames[0].meta;
    const auto& b = g.frames[k].meta;
    if (a.iso != b.iso || a.wb_gains != b.wb_gains)
      throw ValidationError("group: frames must share iso and white balance");
    if (g.frames[k].width != g.frames[0].width || g.frames[k].height != g.frames[0].height)
      throw ValidationError("group: frames must share extent");
  }
  if (g.gt_index >= kGroupSize) throw ValidationError("group: gt_index out of range");
  if (g.invalid.count(g.gt_index)) throw ValidationError("group: ground truth is tagged invalid");
  for (std::size_t i : g.invalid)
    if (i >= kGroupSize) throw ValidationError("group: invalid index out of range");
}

}  // namespace

std::vector<std::size_t> ImageGroup::eligible_inputs() const {
  std::vector<std::size_t> out;
  for (std::size_t k = gt_index + 1; k < kGroupSize; ++k)
    if (!invalid.count(k)) out.push_back(k);
  return out;
}

std::array<double, kGroupSize> exposure_sweep(double t_max, double ratio) {
  if (!(t_max > 0.0) || !(ratio > 1.0)) throw ContractError("exposure_sweep: need t_max > 0 and ratio > 1");
  std::array<double, kGroupSize> t{};
  for (std::size_t k = 0; k < kGroupSize; ++k)
    t[k] = t_max * std::pow(ratio, -static_cast<double>(k) / (kGroupSize - 1));
  return t;
}

void select_ground_truth(ImageGroup& group, const SelectionRule& rule) {
  std::array<double, kGroupSize> bright{}, saturated{};
  group.invalid.clear();
  for (std::size_t k = 0; k < kGroupSize; ++k) {
    const Tensor rgb = raw::raw_to_rgb_reference(group.frames[k]);
    bright[k] = raw::brightness(rgb);
    saturated[k] = raw::saturated_fraction(rgb, rule.saturation_level);
    if (bright[k] < rule.invalid_below) group.invalid.insert(k);
  }
  std::ptrdiff_t best = -1;
  for (std::size_t k = 0; k < kGroupSize; ++k) {
    if (group.invalid.count(k) || saturated[k] >= rule.max_saturated_fraction) continue;
    if (best < 0 || std::fabs(bright[k] - rule.target_brightness) <
                        std::fabs(bright[static_cast<std::size_t>(best)] - rule.target_brightness))
      best = static_cast<std::ptrdiff_t>(k);
  }
  if (best < 0) {
    std::ostringstream os;
    os << "make_group: no frame qualifies as ground truth; brightness/saturation per frame:";
    for (std::size_t k = 0; k < kGroupSize; ++k)
      os << ' ' << k << ':' << std::setprecision(3) << bright[k] << '/' << saturated[k];
    throw GroupRejected(os.str());
  }
  group.gt_index = static_cast<std::size_t>(best);
}

ImageGroup make_group(const Scene& scene, const SensorModel& model, const raw::ExifMeta& meta,
                      const std::array<double, kGroupSize>& times, std::uint64_t noise_seed,
                      const SelectionRule& rule) {
  for (std::size_t k = 0; k < kGroupSize; ++k) {
    if (!(times[k] > 0.0)) throw ContractError("make_group: exposure times must be positive");
    if (k > 0 && !(times[k] < times[k - 1])) throw ContractError("make_group: exposure times must be strictly descending");
  }
  ImageGroup g;
  for (std::size_t k = 0; k < kGroupSize; ++k) g.frames[k] = expose(scene, times[k], model, meta, derive(noise_seed, k));
  check_group(g);  // f32 rounding could in principle merge times
  select_ground_truth(g, rule);
  return g;
}

TrainingPair pair_at(const ImageGroup& group, std::size_t input_index) {
  const auto eligible = group.eligible_inputs();
  if (std::find(eligible.begin(), eligible.end(), input_index) == eligible.end())
    throw PairSamplingError("sample_pair: frame " + std::to_string(input_index) + " is not an eligible input");
  TrainingPair p;
  p.input = &group.frames[input_index];
  p.target = &group.frames[group.gt_index];
  p.input_index = input_index;
  p.t0 = p.input->meta.exposure_time;
  p.t_g = p.target->meta.exposure_time;
  return p;
}

TrainingPair sample_pair(const ImageGroup& group, std::mt19937_64& rng) {
  const auto eligible = group.eligible_inputs();
  if (eligible.empty())
    throw PairSamplingError("sample_pair: group has no eligible input after gt_index " +
                            std::to_string(group.gt_index));
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return pair_at(group, eligible[pick(rng)]);
}

Crop crop_at(const Tensor& packed, const Tensor& rgb, std::size_t size, std::size_t oy, std::size_t ox) {
  if (packed.rank() != 3 || packed.dim(0) != 4 || rgb.rank() != 3 || rgb.dim(0) != 3 ||
      rgb.dim(1) != 2 * packed.dim(1) || rgb.dim(2) != 2 * packed.dim(2))
    throw ContractError("crop: packed " + ad::to_string(packed.shape()) + " and rgb " + ad::to_string(rgb.shape()) +
                        " are not aligned");
  if (size == 0 || size % 2) throw ContractError("crop: size must be even and positive");
  if (oy + size > packed.dim(1) || ox + size > packed.dim(2))
    throw ContractError("crop: " + std::to_string(size) + " at (" + std::to_string(oy) + "," + std::to_string(ox) +
                        ") does not fit " + ad::to_string(packed.shape()));
  auto cut = [](const Tensor& t, std::size_t n, std::size_t y0, std::size_t x0) {
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::vector<double> out(c * n * n);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) out[(ch * n + y) * n + x] = t[(ch * h + y0 + y) * w + x0 + x];
    return Tensor({c, n, n}, std::move(out));
  };
  return Crop{cut(packed, size, oy, ox), cut(rgb, 2 * size, 2 * oy, 2 * ox), oy, ox};
}

Crop random_crop(const Tensor& packed, const Tensor& rgb, std::size_t size, std::mt19937_64& rng) {
  if (packed.rank() != 3 || size > packed.dim(1) || size > packed.dim(2))
    throw ContractError("random_crop: size " + std::to_string(size) + " too large for " + ad::to_string(packed.shape()));
  std::uniform_int_distribution<std::size_t> py(0, packed.dim(1) - size), px(0, packed.dim(2) - size);
  const std::size_t oy = py(rng);
  const std::size_t ox = px(rng);
  return crop_at(packed, rgb, size, oy, ox);
}

ImageGroup generate_group(const SynthConfig& c, std::size_t index) {
  if (c.raw_extent < 32 || c.raw_extent % 2) throw ContractError("synth config: raw_extent must be even and >= 32");
  if (!(c.illumination_min > 0.0) || !(c.illumination_max >= c.illumination_min))
    throw ContractError("synth config: illumination range must be positive and ordered");
  constexpr int kAttempts = 64;
  std::string last;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::mt19937_64 rng(derive(c.seed, index, static_cast<std::uint64_t>(attempt)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double illumination =
        c.illumination_min * std::pow(c.illumination_max / c.illumination_min, unit(rng));
    const double jitter = std::exp(c.t_max_jitter * (2.0 * unit(rng) - 1.0));
    const double t_max = c.t_max_at_unit_illumination / illumination * jitter;

    raw::ExifMeta meta;
    meta.iso = static_cast<float>(c.iso_choices[rng() % c.iso_choices.size()]);
    meta.wb_gains = {static_cast<float>(1.6 + 0.8 * unit(rng)), 1.0f, static_cast<float>(1.3 + 0.7 * unit(rng)), 1.0f};
    meta.aperture = 2.8f;
    SensorModel sensor = c.sensor;
    sensor.shot_noise_gain *= meta.iso / c.iso_reference;

    const Scene scene = synth_scene(rng(), c.raw_extent, c.raw_extent, illumination);
    try {
      ImageGroup g = make_group(scene, sensor, meta, exposure_sweep(t_max, c.sweep_ratio), rng(), c.rule);
      if (!g.eligible_inputs().empty()) return g;
      last = "no eligible input frame";
    } catch (const GroupRejected& e) {
      last = e.what();
    }
  }
  throw GroupRejected("generate_group " + std::to_string(index) + ": gave up after " + std::to_string(kAttempts) +
                      " scenes; last: " + last);
}

std::vector<ImageGroup> generate_dataset(const SynthConfig& config) {
  std::vector<ImageGroup> groups(config.groups);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(config.groups); ++i)
    groups[static_cast<std::size_t>(i)] = generate_group(config, static_cast<std::size_t>(i));
  return groups;
}

void write_group(const std::filesystem::path& dir, const ImageGroup& group) {
  check_group(group);
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < kGroupSize; ++k)
    raw::save_cidraw(dir / ("frame_" + std::to_string(k) + ".cidraw"), group.frames[k]);
  std::ofstream os(dir / "manifest.txt");
  os << "gt_index=" << group.gt_index << "\ninvalid=";
  bool first = true;
  for (std::size_t i : group.invalid) {
    os << (first ? "" : ",") << i;
    first = false;
  }
  os << '\n';
  if (!os) throw std::runtime_error("write_group: cannot write manifest in " + dir.string());
}

ImageGroup read_group(const std::filesystem::path& dir) {
  ImageGroup g;
  for (std::size_t k = 0; k < kGroupSize; ++k)
    g.frames[k] = raw::load_cidraw(dir / ("frame_" + std::to_string(k) + ".cidraw"));
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw std::runtime_error("read_group: missing manifest.txt in " + dir.string());
  bool have_gt = false, have_invalid = false;
  std::string line;
  auto parse_index = [&](const std::string& s) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty())
      throw ValidationError("read_group: bad index '" + s + "' in " + (dir / "manifest.txt").string());
    return static_cast<std::size_t>(v);
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq), value = eq == std::string::npos ? "" : line.substr(eq + 1);
    if (key == "gt_index") {
      g.gt_index = parse_index(value);
      have_gt = true;
    } else if (key == "invalid") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) g.invalid.insert(parse_index(item));
      have_invalid = true;
    } else {
      throw ValidationError("read_group: unknown manifest key '" + key + "'");
    }
  }
  if (!have_gt || !have_invalid) throw ValidationError("read_group: manifest needs gt_index and invalid lines");
  check_group(g);
  return g;
}

void write_dataset(const std::filesystem::path& root, const std::vector<ImageGroup>& groups) {
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::ostringstream name;
    name << "group_" << std::setw(4) << std::setfill('0') << i;
    write_group(root / name.str(), groups[i]);
  }
}

std::vector<ImageGroup> read_dataset(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() && entry.path().filename().string().starts_with("group_")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw std::runtime_error("read_dataset: no group_<NNNN> directories in " + root.string());
  std::vector<ImageGroup> groups;
  groups.reserve(dirs.size());
  for (const auto& d : dirs) groups.push_back(read_group(d));
  return groups;
}

}  // namespace lowlight::synth
