#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lowlight/error.hpp"
#include "lowlight/harness.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace lowlight::harness {
namespace {

constexpr char kMagic[4] = {'E', 'S', 'B', 'P'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <class T>
  T get(const std::string& field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  void get_bytes(void* dst, std::size_t n, const std::string& field) {
    need(n, field);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint: truncated while reading " + field, in_.size());
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void put_params(Writer& w, const ad::ParamSet& params) {
  for (const ad::Parameter& p : params.items()) {
    w.put(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name.data(), p.name.size());
    w.put(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.put(static_cast<std::uint32_t>(d));
    for (double v : p.value.values()) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) throw ContractError("checkpoint: parameter " + p.name + " is not finite in f32");
      w.put(f);
    }
  }
}

ad::ParamSet get_params(Reader& r, const std::vector<std::pair<std::string, ad::Shape>>& expected,
                        const char* network) {
  ad::ParamSet out;
  for (const auto& [want_name, want_shape] : expected) {
    const std::size_t at = r.pos();
    const auto len = r.get<std::uint16_t>("parameter name length");
    std::string name(len, '\0');
    r.get_bytes(name.data(), len, "parameter name");
    if (name != want_name)
      throw ValidationError(std::string("checkpoint: ") + network + " parameter at byte " + std::to_string(at) +
                            " is '" + name + "', expected '" + want_name + "'");
    const auto rank = r.get<std::uint8_t>(name + " rank");
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>(name + " dims");
    if (shape != want_shape)
      throw ValidationError("checkpoint: " + name + " has shape " + ad::to_string(shape) + ", the config implies " +
                            ad::to_string(want_shape));
    std::vector<double> values(ad::numel(shape));
    for (double& v : values) {
      const float f = r.get<float>(name + " data");
      if (!std::isfinite(f)) throw ValidationError("checkpoint: " + name + " holds a non-finite value");
      v = f;
    }
    out.add(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

template <std::size_t N>
void put_array(Writer& w, const std::array<double, N>& a) {
  for (double v : a) w.put(v);
}

template <std::size_t N>
void get_array(Reader& r, std::array<double, N>& a, const char* field) {
  for (double& v : a) v = r.get<double>(field);
}

}  // namespace

ad::ParamSet to_stored_precision(const ad::ParamSet& params) {
  ad::ParamSet out;
  for (const ad::Parameter& p : params.items()) {
    std::vector<double> v(p.value.values().begin(), p.value.values().end());
    for (double& x : v) x = static_cast<float>(x);
    out.add(p.name, Tensor(p.value.shape(), std::move(v)));
  }
  return out;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  c.esn_config.validate();
  if (c.bpn_config) c.bpn_config->validate();
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(Checkpoint::kVersion);
  w.put(static_cast<std::uint8_t>(c.bpn_config ? 1 : 0));

  w.put(c.esn_config.depth);
  w.put(c.esn_config.base_channels);
  w.put(c.esn_config.leaky_slope);
  if (c.bpn_config) {
    const bpn::BpnConfig& b = *c.bpn_config;
    w.put(static_cast<std::uint32_t>(b.stage_channels.size()));
    for (auto v : b.stage_channels) w.put(v);
    w.put(static_cast<std::uint32_t>(b.fc_widths.size()));
    for (auto v : b.fc_widths) w.put(v);
    w.put(b.input_extent);
    for (double v : {b.leaky_slope, b.mu_w, b.sigma_w_sq, b.sigma_v_sq, b.z_min, b.z_max}) w.put(v);
  }

  w.put(c.stats.version);
  put_array(w, c.stats.channel_mean);
  put_array(w, c.stats.channel_std);
  put_array(w, c.stats.iev_mean);
  put_array(w, c.stats.iev_std);

  const TrainingProvenance& p = c.provenance;
  w.put(p.split_seed);
  w.put(p.esn_seed);
  w.put(p.bpn_seed);
  w.put(p.esn_epochs);
  w.put(p.bpn_epochs);
  for (double v : {p.esn_final_train_mean, p.esn_final_train_std, p.esn_final_validation, p.bpn_final_train_mean})
    w.put(v);

  const auto esn_shapes = esn::esn_param_shapes(c.esn_config);
  if (c.esn_params.size() != esn_shapes.size()) throw ContractError("checkpoint: ESN parameters do not match the config");
  put_params(w, c.esn_params);
  if (c.bpn_config) {
    if (c.bpn_params.size() != bpn::bpn_param_shapes(*c.bpn_config).size())
      throw ContractError("checkpoint: BPN parameters do not match the config");
    put_params(w, c.bpn_params);
  }
  return std::move(w.out);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic (expected ESBP)", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != Checkpoint::kVersion)
    throw FormatError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(Checkpoint::kVersion) + ")",
                      4);
  const auto has_bpn = r.get<std::uint8_t>("bpn flag");
  if (has_bpn > 1) throw FormatError("checkpoint: bad BPN flag", 6);

  Checkpoint c;
  c.esn_config.depth = r.get<std::uint32_t>("esn depth");
  c.esn_config.base_channels = r.get<std::uint32_t>("esn base channels");
  c.esn_config.leaky_slope = r.get<double>("esn leaky slope");
  try {
    c.esn_config.validate();
  } catch (const ContractError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  if (has_bpn) {
    bpn::BpnConfig b;
    auto list = [&r](const char* what) {
      const auto n = r.get<std::uint32_t>(what);
      if (n > 64) throw ValidationError(std::string("checkpoint: implausible ") + what + " " + std::to_string(n));
      std::vector<std::uint32_t> v(n);
      for (auto& x : v) x = r.get<std::uint32_t>(what);
      return v;
    };
    b.stage_channels = list("bpn stage count");
    b.fc_widths = list("bpn fc count");
    b.input_extent = r.get<std::uint32_t>("bpn input extent");
    for (double* v : {&b.leaky_slope, &b.mu_w, &b.sigma_w_sq, &b.sigma_v_sq, &b.z_min, &b.z_max})
      *v = r.get<double>("bpn config");
    try {
      b.validate();
    } catch (const ContractError& e) {
      throw ValidationError(std::string("checkpoint: ") + e.what());
    }
    c.bpn_config = b;
  }

  c.stats.version = r.get<std::uint32_t>("stats version");
  if (c.stats.version != cond::NormStats::kVersion)
    throw ValidationError("checkpoint: normalization stats version " + std::to_string(c.stats.version));
  get_array(r, c.stats.channel_mean, "channel mean");
  get_array(r, c.stats.channel_std, "channel std");
  get_array(r, c.stats.iev_mean, "iev mean");
  get_array(r, c.stats.iev_std, "iev std");

  TrainingProvenance& p = c.provenance;
  p.split_seed = r.get<std::uint64_t>("provenance");
  p.esn_seed = r.get<std::uint64_t>("provenance");
  p.bpn_seed = r.get<std::uint64_t>("provenance");
  p.esn_epochs = r.get<std::uint32_t>("provenance");
  p.bpn_epochs = r.get<std::uint32_t>("provenance");
  for (double* v : {&p.esn_final_train_mean, &p.esn_final_train_std, &p.esn_final_validation, &p.bpn_final_train_mean})
    *v = r.get<double>("provenance");

  c.esn_params = get_params(r, esn::esn_param_shapes(c.esn_config), "ESN");
  if (c.bpn_config) c.bpn_params = get_params(r, bpn::bpn_param_shapes(*c.bpn_config), "BPN");
  if (r.remaining() != 0)
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes", r.pos());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace lowlight::harness
