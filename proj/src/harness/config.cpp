#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lowlight/error.hpp"
#include "lowlight/harness.hpp"

namespace lowlight::harness {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
  return d;
}

std::uint64_t to_u64(const std::string& v) {
  if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
  std::size_t used = 0;
  const unsigned long long u = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return u;
}

std::uint32_t to_u32(const std::string& v) {
  const std::uint64_t u = to_u64(v);
  if (u > 0xffffffffULL) throw std::out_of_range(v);
  return static_cast<std::uint32_t>(u);
}

std::string fmt(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;
struct Key {
  Setter set;
  Getter get;
};

#define LL_DOUBLE(name, field) \
  {name, {[](RunConfig& c, const std::string& v) { c.field = to_double(v); }, [](const RunConfig& c) { return fmt(c.field); }}}
#define LL_U32(name, field) \
  {name, {[](RunConfig& c, const std::string& v) { c.field = to_u32(v); }, [](const RunConfig& c) { return std::to_string(c.field); }}}
#define LL_U64(name, field) \
  {name, {[](RunConfig& c, const std::string& v) { c.field = to_u64(v); }, [](const RunConfig& c) { return std::to_string(c.field); }}}
#define LL_PATH(name, field) \
  {name, {[](RunConfig& c, const std::string& v) { c.field = v; }, [](const RunConfig& c) { return c.field.string(); }}}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      LL_U64("groups", synth.groups),
      LL_U64("test_groups", test_groups),
      LL_U64("raw_extent", synth.raw_extent),
      LL_U64("data_seed", synth.seed),
      LL_DOUBLE("illumination_min", synth.illumination_min),
      LL_DOUBLE("illumination_max", synth.illumination_max),
      LL_DOUBLE("t_max_at_unit_illumination", synth.t_max_at_unit_illumination),
      LL_DOUBLE("t_max_jitter", synth.t_max_jitter),
      LL_DOUBLE("sweep_ratio", synth.sweep_ratio),
      LL_DOUBLE("crf_a", synth.sensor.crf_a),
      LL_DOUBLE("crf_b", synth.sensor.crf_b),
      LL_DOUBLE("read_noise_sd", synth.sensor.read_noise_sd),
      LL_DOUBLE("shot_noise_gain", synth.sensor.shot_noise_gain),
      LL_DOUBLE("target_brightness", synth.rule.target_brightness),
      LL_DOUBLE("max_saturated_fraction", synth.rule.max_saturated_fraction),
      LL_DOUBLE("invalid_below", synth.rule.invalid_below),
      LL_DOUBLE("alpha", train.alpha),
      LL_DOUBLE("lr_start", train.lr_start),
      LL_DOUBLE("lr_end", train.lr_end),
      LL_U32("esn_epochs", train.esn_epochs),
      LL_U32("bpn_epochs", train.bpn_epochs),
      LL_U32("patch_size", train.patch_size),
      LL_U32("bpn_input_extent", train.bpn_input_extent),
      LL_DOUBLE("validation_fraction", train.validation_fraction),
      LL_U64("split_seed", train.split_seed),
      LL_U64("esn_seed", train.esn_seed),
      LL_U64("bpn_seed", train.bpn_seed),
      LL_U32("esn_depth", train.esn_depth),
      LL_U32("esn_base_channels", train.esn_base_channels),
      LL_PATH("train_dir", train.train_dir),
      LL_PATH("test_dir", train.test_dir),
  };
  return table;
}

#undef LL_DOUBLE
#undef LL_U32
#undef LL_U64
#undef LL_PATH

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractError("config: alpha must be in [0, 1)");
  if (!(lr_end >= 0.0) || !(lr_start >= lr_end) || !std::isfinite(lr_start))
    throw ContractError("config: need lr_start >= lr_end >= 0");
  if (esn_epochs < 1 || bpn_epochs < 1) throw ContractError("config: epochs must be >= 1");
  const std::uint32_t align = 1u << esn_depth;
  if (patch_size < 16 || patch_size % align)
    throw ContractError("config: patch_size must be >= 16 and a multiple of " + std::to_string(align));
  if (bpn_input_extent < 16) throw ContractError("config: bpn_input_extent must be >= 16");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ContractError("config: validation_fraction must be in [0, 1)");
  esn_config().validate();
  bpn_config().validate();
}

esn::EsnConfig TrainConfig::esn_config() const {
  esn::EsnConfig c;
  c.depth = esn_depth;
  c.base_channels = esn_base_channels;
  return c;
}

bpn::BpnConfig TrainConfig::bpn_config() const {
  bpn::BpnConfig c;
  c.input_extent = bpn_input_extent;
  return c;
}

void apply_config(RunConfig& config, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  for (std::size_t number = 1; std::getline(is, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = keys().find(key);
    if (it == keys().end()) throw ConfigError("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    try {
      it->second.set(config, value);
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(number) + ": bad value '" + value + "' for " + key);
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  apply_config(config, os.str());
}

synth::SynthConfig test_synth_config(const RunConfig& config) {
  synth::SynthConfig t = config.synth;
  t.groups = config.test_groups;
  t.seed = config.synth.seed + 1000;
  return t;
}

void apply_paper_scale(RunConfig& config) {
  config.train.patch_size = 512;
  config.train.esn_epochs = 300;
  config.train.bpn_epochs = 100;
  config.synth.raw_extent = std::max<std::size_t>(config.synth.raw_extent, 2048);
}

std::string describe(const RunConfig& config) {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(config) + "\n";
  return out;
}

double learning_rate(const TrainConfig& c, std::uint32_t epoch, std::uint32_t epochs) {
  if (epochs == 0 || epoch >= epochs) throw ContractError("learning_rate: epoch out of range");
  if (epoch == 0 || c.lr_start == c.lr_end) return c.lr_start;
  if (epoch + 1 == epochs) return c.lr_end;
  if (c.lr_end == 0.0) return c.lr_start * (1.0 - static_cast<double>(epoch) / (epochs - 1));
  const double f = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return std::exp(std::log(c.lr_start) + f * (std::log(c.lr_end) - std::log(c.lr_start)));
}

}  // namespace lowlight::harness
