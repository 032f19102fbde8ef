#pragma once

// Raw sensor frames, the CIDRAW container, Bayer packing and the reference
// raw -> RGB conversion used to build targets.
//
// Images are ad::Tensor values in (C, H, W) layout: packed raw is (4, H/2, W/2)
// in channel order R, G, B, G2; RGB is (3, H, W); gray is (1, H, W).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::raw {

using ad::Tensor;

/// Capture metadata. Stored at container precision (f32) so frames round-trip
/// through CIDRAW bit-exactly.
struct ExifMeta {
  float iso = 100.0f;
  float exposure_time = 0.01f;                        // seconds
  std::array<float, 4> wb_gains{1.0f, 1.0f, 1.0f, 1.0f};  // r, g, b, g2
  float aperture = 0.0f;                              // 0 = unknown

  bool operator==(const ExifMeta&) const = default;
};

enum class Cfa : std::uint8_t { rggb = 0 };

struct RawFrame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  Cfa cfa = Cfa::rggb;
  std::uint16_t black_level = 0;
  std::uint16_t white_level = 65535;
  std::vector<std::uint16_t> counts;  // row-major, width*height
  ExifMeta meta;

  bool operator==(const RawFrame&) const = default;
  std::uint16_t at(std::size_t y, std::size_t x) const { return counts[y * width + x]; }
};

/// Throws ValidationError when a RawFrame or its metadata breaks an invariant.
void validate(const RawFrame& frame);
void validate(const ExifMeta& meta);

// --- CIDRAW container ---------------------------------------------------------

inline constexpr std::size_t kCidrawHeaderSize = 48;

std::vector<std::uint8_t> write_cidraw(const RawFrame& frame);
/// FormatError (with byte offset) for bad magic, version, CFA tag or length;
/// ValidationError for well-formed files that violate frame invariants.
RawFrame read_cidraw(std::span<const std::uint8_t> bytes);

void save_cidraw(const std::filesystem::path& path, const RawFrame& frame);
RawFrame load_cidraw(const std::filesystem::path& path);

// --- conversions --------------------------------------------------------------

/// CFA channel (0 R, 1 G, 2 B, 3 G2) recorded at sensor site (y, x).
constexpr std::size_t site_channel(std::size_t y, std::size_t x) {
  return (y % 2 == 0) ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 3 : 2);
}

/// (4, H/2, W/2) of clamp((count - black) / (white - black), 0, 1); no white balance.
Tensor pack_bayer(const RawFrame& frame);

/// White-balanced, bilinearly demosaiced, clamped linear RGB (3, H, W).
Tensor raw_to_rgb_linear(const RawFrame& frame);
/// raw_to_rgb_linear followed by gamma 1/2.2.
Tensor raw_to_rgb_reference(const RawFrame& frame);

/// Channel mean, (3, H, W) -> (1, H, W). Differentiable.
Tensor rgb_to_gray(const Tensor& rgb);
/// Mean over all channels and pixels.
double brightness(const Tensor& image);
/// Fraction of pixels with any channel >= threshold.
double saturated_fraction(const Tensor& rgb, double threshold);

}  // namespace lowlight::raw
