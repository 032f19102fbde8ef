#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lowlight/error.hpp"
#include "lowlight/rawproc.hpp"

static_assert(std::endian::native == std::endian::little, "CIDRAW I/O assumes a little-endian host");

namespace lowlight::raw {
namespace {

constexpr char kMagic[4] = {'C', 'I', 'D', 'R'};
constexpr std::uint16_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof v);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <class T>
  T get(const char* field) {
    if (in_.size() - pos_ < sizeof(T))
      throw FormatError(std::string("cidraw: truncated header reading ") + field, in_.size());
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate(const ExifMeta& meta) {
  auto positive = [](float v) { return std::isfinite(v) && v > 0.0f; };
  if (!positive(meta.iso)) throw ValidationError("exif: iso must be positive");
  if (!positive(meta.exposure_time)) throw ValidationError("exif: exposure_time must be positive");
  for (float g : meta.wb_gains)
    if (!positive(g)) throw ValidationError("exif: white-balance gains must be positive");
  if (!std::isfinite(meta.aperture) || meta.aperture < 0.0f)
    throw ValidationError("exif: aperture must be non-negative");
}

void validate(const RawFrame& f) {
  if (f.width == 0 || f.height == 0 || f.width % 2 || f.height % 2)
    throw ValidationError("raw frame: width and height must be even and positive, got " +
                          std::to_string(f.width) + "x" + std::to_string(f.height));
  if (f.cfa != Cfa::rggb) throw ValidationError("raw frame: only RGGB is supported");
  if (f.black_level >= f.white_level)
    throw ValidationError("raw frame: black_level " + std::to_string(f.black_level) +
                          " must be below white_level " + std::to_string(f.white_level));
  if (f.counts.size() != std::size_t{f.width} * f.height)
    throw ValidationError("raw frame: expected " + std::to_string(std::size_t{f.width} * f.height) +
                          " counts, got " + std::to_string(f.counts.size()));
  validate(f.meta);
}

std::vector<std::uint8_t> write_cidraw(const RawFrame& f) {
  validate(f);
  std::vector<std::uint8_t> out;
  out.reserve(kCidrawHeaderSize + 2 * f.counts.size());
  Writer w(out);
  for (char c : kMagic) w.put(c);
  w.put(kVersion);
  w.put(f.width);
  w.put(f.height);
  w.put(static_cast<std::uint8_t>(f.cfa));
  w.put(std::uint8_t{0});
  w.put(f.black_level);
  w.put(f.white_level);
  w.put(f.meta.iso);
  w.put(f.meta.exposure_time);
  for (float g : f.meta.wb_gains) w.put(g);
  w.put(f.meta.aperture);
  const auto* payload = reinterpret_cast<const std::uint8_t*>(f.counts.data());
  out.insert(out.end(), payload, payload + 2 * f.counts.size());
  return out;
}

RawFrame read_cidraw(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = r.get<char>("magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("cidraw: bad magic", 0);
  const std::size_t version_at = r.pos();
  if (const auto v = r.get<std::uint16_t>("version"); v != kVersion)
    throw FormatError("cidraw: unsupported version " + std::to_string(v), version_at);

  RawFrame f;
  f.width = r.get<std::uint32_t>("width");
  f.height = r.get<std::uint32_t>("height");
  const std::size_t cfa_at = r.pos();
  if (const auto cfa = r.get<std::uint8_t>("cfa"); cfa != 0)
    throw FormatError("cidraw: unsupported CFA tag " + std::to_string(cfa), cfa_at);
  const std::size_t reserved_at = r.pos();
  if (r.get<std::uint8_t>("reserved") != 0) throw FormatError("cidraw: reserved byte not zero", reserved_at);
  f.black_level = r.get<std::uint16_t>("black_level");
  f.white_level = r.get<std::uint16_t>("white_level");
  f.meta.iso = r.get<float>("iso");
  f.meta.exposure_time = r.get<float>("exposure_time");
  for (float& g : f.meta.wb_gains) g = r.get<float>("wb_gains");
  f.meta.aperture = r.get<float>("aperture");

  const std::size_t expected = kCidrawHeaderSize + 2 * std::size_t{f.width} * f.height;
  if (bytes.size() != expected)
    throw FormatError("cidraw: expected " + std::to_string(expected) + " bytes for " +
                          std::to_string(f.width) + "x" + std::to_string(f.height) + ", got " +
                          std::to_string(bytes.size()),
                      std::min(bytes.size(), expected));
  f.counts.resize(std::size_t{f.width} * f.height);
  std::memcpy(f.counts.data(), bytes.data() + kCidrawHeaderSize, 2 * f.counts.size());
  validate(f);
  return f;
}

void save_cidraw(const std::filesystem::path& path, const RawFrame& frame) {
  const auto bytes = write_cidraw(frame);
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("cidraw: cannot write " + path.string());
}

RawFrame load_cidraw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cidraw: cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(is), {}};
  return read_cidraw(bytes);
}

}  // namespace lowlight::raw
