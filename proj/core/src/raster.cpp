#include "deeplight/raster.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "deeplight/error.hpp"

namespace dl {
namespace {

static_assert(std::endian::native == std::endian::little, "raster IO assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'L', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 24;

double keys_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

void write_raster(const std::filesystem::path& path, const Raster& raster, RasterDType dtype) {
  if (raster.data.size() != static_cast<std::size_t>(raster.bands) * raster.plane()) {
    throw DimensionError("write_raster: data length does not match " + std::to_string(raster.bands) + "x" +
                         std::to_string(raster.height) + "x" + std::to_string(raster.width));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  const std::uint32_t header[5] = {kVersion, static_cast<std::uint32_t>(raster.bands),
                                   static_cast<std::uint32_t>(raster.height),
                                   static_cast<std::uint32_t>(raster.width), static_cast<std::uint32_t>(dtype)};
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  if (dtype == RasterDType::kF32) {
    out.write(reinterpret_cast<const char*>(raster.data.data()),
              static_cast<std::streamsize>(raster.data.size() * sizeof(float)));
  } else {
    std::vector<std::uint8_t> bytes(raster.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      const float v = raster.data[i];
      if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v)) {
        throw DataError("write_raster: value " + std::to_string(v) + " at index " + std::to_string(i) +
                        " is not representable as u8");
      }
      bytes[i] = static_cast<std::uint8_t>(v);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  out.flush();
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open raster '" + path.string() + "'");
  char header[kHeaderBytes];
  in.read(header, kHeaderBytes);
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < 4 || std::memcmp(header, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic at offset 0 (expected DLT1)");
  }
  if (got < kHeaderBytes) {
    throw FormatError(path.string() + ": truncated header at offset " + std::to_string(got));
  }
  std::uint32_t fields[5];
  std::memcpy(fields, header + 4, sizeof(fields));
  if (fields[0] != kVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(fields[0]) + " at offset 4");
  }
  if (fields[4] > 1) throw FormatError(path.string() + ": unknown dtype " + std::to_string(fields[4]) + " at offset 20");
  if (fields[1] == 0 || fields[2] == 0 || fields[3] == 0 || fields[1] > 4096 || fields[2] > 65536 ||
      fields[3] > 65536) {
    throw FormatError(path.string() + ": implausible extents at offset 8");
  }
  Raster r(static_cast<int>(fields[1]), static_cast<int>(fields[2]), static_cast<int>(fields[3]));
  const auto dtype = static_cast<RasterDType>(fields[4]);
  const std::size_t elem = dtype == RasterDType::kF32 ? sizeof(float) : 1;
  const std::size_t need = r.data.size() * elem;
  std::vector<char> payload(need);
  in.read(payload.data(), static_cast<std::streamsize>(need));
  const auto read = static_cast<std::size_t>(in.gcount());
  if (read != need) {
    throw FormatError(path.string() + ": truncated payload at offset " + std::to_string(kHeaderBytes + read) +
                      " (expected " + std::to_string(kHeaderBytes + need) + " bytes)");
  }
  if (dtype == RasterDType::kF32) {
    std::memcpy(r.data.data(), payload.data(), need);
  } else {
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = static_cast<std::uint8_t>(payload[i]);
  }
  return r;
}

Raster bicubic_upsample(const Raster& src, int factor) {
  if (factor < 1) throw ConfigError("bicubic_upsample: factor must be positive");
  Raster out(src.bands, src.height * factor, src.width * factor);
  // Separable tap tables; identical for rows and columns when square.
  auto taps = [factor](int in_size, int out_size) {
    std::vector<std::array<std::pair<int, double>, 4>> t(static_cast<std::size_t>(out_size));
    for (int d = 0; d < out_size; ++d) {
      const double s = (d + 0.5) / factor - 0.5;
      const int base = static_cast<int>(std::floor(s));
      for (int k = 0; k < 4; ++k) {
        const int i = base - 1 + k;
        t[d][k] = {std::clamp(i, 0, in_size - 1), keys_weight(s - i)};
      }
    }
    return t;
  };
  const auto ty = taps(src.height, out.height);
  const auto tx = taps(src.width, out.width);
  std::vector<double> rows(static_cast<std::size_t>(src.height) * out.width);
  for (int b = 0; b < src.bands; ++b) {
    const float* s = src.band(b);
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (const auto& [i, w] : tx[x]) acc += w * s[static_cast<std::size_t>(y) * src.width + i];
        rows[static_cast<std::size_t>(y) * out.width + x] = acc;
      }
    }
    float* o = out.band(b);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (const auto& [i, w] : ty[y]) acc += w * rows[static_cast<std::size_t>(i) * out.width + x];
        o[static_cast<std::size_t>(y) * out.width + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace dl
