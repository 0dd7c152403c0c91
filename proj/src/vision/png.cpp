#include "ldm4ts/vision/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ldm4ts/errors.hpp"

namespace ldm4ts::vision {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::uint8_t quantize(double p) {
  const double c = std::clamp(p, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
}

std::vector<std::uint8_t> encode_png(const std::vector<std::uint8_t>& pixels, std::size_t width,
                                     std::size_t height, std::size_t channels) {
  if (channels != 1 && channels != 3) throw ValidationError("png: channels must be 1 or 3");
  if (width == 0 || height == 0 || pixels.size() != width * height * channels) {
    throw DimensionError("png: pixel buffer does not match dimensions");
  }
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width * channels + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(y * width * channels),
               pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * width * channels));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("png: zlib compression failed");
  }
  z.resize(zlen);
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.insert(ihdr.end(), {8, static_cast<std::uint8_t>(channels == 3 ? 2 : 0), 0, 0, 0});
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

std::vector<std::string> export_png(const Tensor& images, const std::string& dir, const std::string& split,
                                    std::size_t first_index, bool grayscale) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("export_png expects B x 3 x H x W, got " + shape_str(images.shape()));
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir);
  const std::size_t B = images.dim(0), H = images.dim(2), W = images.dim(3), hw = H * W;
  static const char* names[3] = {"seg", "gaf", "rp"};
  std::vector<std::string> paths;
  for (std::size_t b = 0; b < B; ++b) {
    const std::string stem = dir + "/" + split + "_" + std::to_string(first_index + b) + "_";
    std::vector<std::uint8_t> rgb(hw * 3);
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<std::uint8_t> gray(hw);
      for (std::size_t i = 0; i < hw; ++i) {
        const double p = images[(b * 3 + c) * hw + i];
        if (!(p >= 0.0 && p <= 1.0)) throw InvariantError("export_png: pixel outside [0, 1]");
        gray[i] = rgb[i * 3 + c] = quantize(p);
      }
      if (grayscale) {
        paths.push_back(stem + names[c] + ".png");
        write_file(paths.back(), encode_png(gray, W, H, 1));
      }
    }
    paths.push_back(stem + "rgb.png");
    write_file(paths.back(), encode_png(rgb, W, H, 3));
  }
  return paths;
}

}  // namespace ldm4ts::vision
