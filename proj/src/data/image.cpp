#include "huvr/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "huvr/error.hpp"

namespace huvr::data {

std::uint64_t content_hash(std::uint32_t width, std::uint32_t height,
                           const std::vector<std::uint8_t>& rgb) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 4; ++i) feed(static_cast<std::uint8_t>(width >> (8 * i)));
  for (int i = 0; i < 4; ++i) feed(static_cast<std::uint8_t>(height >> (8 * i)));
  for (std::uint8_t b : rgb) feed(b);
  return h;
}

std::vector<std::uint8_t> to_rgb8(const Tensor& pixels) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3)
    throw ShapeError("to_rgb8: expected [3, H, W], got " + ad::to_string(pixels.shape()));
  const std::size_t H = pixels.dim(1), W = pixels.dim(2);
  const auto v = pixels.to_vector();
  std::vector<std::uint8_t> out(H * W * 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < H * W; ++i) {
      const double x = std::clamp(v[c * H * W + i], 0.0, 1.0);
      out[i * 3 + c] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
  return out;
}

Image from_rgb8(std::uint32_t width, std::uint32_t height, const std::vector<std::uint8_t>& rgb) {
  if (width == 0 || height == 0) throw DataError("image has zero extent");
  if (rgb.size() != std::size_t{width} * height * 3) throw DataError("RGB buffer size mismatch");
  std::vector<float> v(rgb.size());
  const std::size_t n = std::size_t{width} * height;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[c * n + i] = static_cast<float>(rgb[i * 3 + c]) / 255.0f;
  return {Tensor::from({3, height, width}, std::move(v)), content_hash(width, height, rgb)};
}

Image make_image(const Tensor& pixels) {
  auto rgb = to_rgb8(pixels);
  auto v = pixels.to_vector();
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(std::clamp(v[i], 0.0, 1.0));
  const auto H = static_cast<std::uint32_t>(pixels.dim(1)), W = static_cast<std::uint32_t>(pixels.dim(2));
  return {Tensor::from(pixels.shape(), std::move(f)), content_hash(W, H, rgb)};
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > (1L << 24)) throw FormatError(name + ": PPM header value too large");
    }
    if (!any) throw FormatError(name + ": malformed PPM header");
    return v;
  };
  const long w = next_token(), h = next_token(), maxv = next_token();
  if (w <= 0 || h <= 0) throw FormatError(name + ": PPM has zero extent");
  if (maxv != 255) throw FormatError(name + ": only 8-bit PPM (maxval 255) is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() < pos + need) throw FormatError(name + ": truncated PPM data");
  std::vector<std::uint8_t> rgb(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return from_rgb8(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h), rgb);
}

Image decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw FormatError(name + ": " + img.message);
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw FormatError(name + ": only 8-bit PNG is supported");
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw FormatError(name + ": " + msg);
  }
  return from_rgb8(img.width, img.height, rgb);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string name = path.string();
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G')
    return decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, name);
  throw FormatError(name + ": unsupported image format (expected PNG or binary PPM)");
}

void save_png(const std::filesystem::path& path, const Tensor& pixels) {
  const auto rgb = to_rgb8(pixels);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(pixels.dim(2));
  img.height = static_cast<png_uint_32>(pixels.dim(1));
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, rgb.data(), 0, nullptr))
    throw DataError("cannot write " + path.string() + ": " + img.message);
}

void save_ppm(const std::filesystem::path& path, const Tensor& pixels) {
  const auto rgb = to_rgb8(pixels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << pixels.dim(2) << ' ' << pixels.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace huvr::data
