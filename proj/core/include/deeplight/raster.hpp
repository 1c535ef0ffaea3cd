#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dl {

/// Band-major, row-major float raster.
struct Raster {
  int bands = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int b, int h, int w, float fill = 0.0f)
      : bands(b), height(h), width(w), data(static_cast<std::size_t>(b) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int b, int y, int x) { return data[b * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int b, int y, int x) const { return data[b * plane() + static_cast<std::size_t>(y) * width + x]; }
  const float* band(int b) const { return data.data() + b * plane(); }
  float* band(int b) { return data.data() + b * plane(); }

  bool operator==(const Raster&) const = default;
};

enum class RasterDType : std::uint32_t { kF32 = 0, kU8 = 1 };

/// DLT1 file: "DLT1" | u32 version | u32 bands | u32 height | u32 width |
/// u32 dtype | band-major little-endian payload. u8 rasters must hold
/// integral values in [0, 255].
void write_raster(const std::filesystem::path& path, const Raster& raster, RasterDType dtype = RasterDType::kF32);
Raster read_raster(const std::filesystem::path& path);

/// Keys cubic (a = -0.5) upsampling by an integer factor, half-pixel
/// centres, edge clamping; the result is clamped to [0, 1].
Raster bicubic_upsample(const Raster& src, int factor);

}  // namespace dl
