#include "tetradat/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace tetradat {

Image::Image(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), pixels_(height * width * kChannels, fill) {
  if (height == 0 || width == 0)
    throw std::invalid_argument("image dimensions must be positive");
}

Image::Image(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height == 0 || width == 0)
    throw std::invalid_argument("image dimensions must be positive");
  if (pixels_.size() != height * width * kChannels)
    throw std::invalid_argument("pixel buffer size does not match H x W x 3");
}

void Image::check_range() const {
  for (double v : pixels_)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("image channel value outside [0, 1]");
}

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Returns interleaved 8-bit samples with `channels` per pixel.
void write_png(const std::filesystem::path& path, std::size_t height,
               std::size_t width, int channels,
               const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageIoError("cannot open " + path.string() + " for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = width * static_cast<std::size_t>(channels);
  for (std::size_t r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed reading " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  // Normalize every PNG flavour to 8-bit RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const std::size_t width = png_get_image_width(png, info);
  const std::size_t height = png_get_image_height(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("unsupported PNG layout in " + path.string());
  }
  std::vector<std::uint8_t> bytes(height * rowbytes);
  for (std::size_t r = 0; r < height; ++r)
    png_read_row(png, bytes.data() + r * rowbytes, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> px(bytes.size());
  std::transform(bytes.begin(), bytes.end(), px.begin(),
                 [](std::uint8_t b) { return b / 255.0; });
  return Image(height, width, std::move(px));
}

// Skips whitespace and '#' comments between netpbm header fields.
std::size_t read_pnm_field(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(in >> v)) throw ImageIoError("malformed netpbm header");
  return v;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  const bool gray = magic == "P5";
  if (!gray && magic != "P6")
    throw ImageIoError("only binary P5/P6 netpbm is supported: " +
                       path.string());
  const auto width = read_pnm_field(in);
  const auto height = read_pnm_field(in);
  const auto maxval = read_pnm_field(in);
  in.get();
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255)
    throw ImageIoError("unsupported netpbm header in " + path.string());
  const std::size_t ch = gray ? 1 : 3;
  std::vector<unsigned char> bytes(width * height * ch);
  if (!in.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size())))
    throw ImageIoError("truncated netpbm data in " + path.string());
  std::vector<double> px(width * height * 3);
  for (std::size_t i = 0; i < width * height; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      px[i * 3 + c] = bytes[i * ch + (gray ? 0 : c)] / static_cast<double>(maxval);
  return Image(height, width, std::move(px));
}

void write_pnm(const std::filesystem::path& path, std::size_t height,
               std::size_t width, int channels,
               const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot open " + path.string() + " for writing");
  out << (channels == 3 ? "P6" : "P5") << '\n'
      << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError("failed writing " + path.string());
}

void write_any(const std::filesystem::path& path, std::size_t height,
               std::size_t width, int channels,
               const std::vector<std::uint8_t>& bytes) {
  const auto ext = extension(path);
  if (ext == ".png")
    write_png(path, height, width, channels, bytes);
  else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")
    write_pnm(path, height, width, channels, bytes);
  else
    throw ImageIoError("unsupported image extension: " + path.string());
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto ext = extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  throw ImageIoError("unsupported image extension: " + path.string());
}

void save_image(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes(image.size());
  std::transform(image.values().begin(), image.values().end(), bytes.begin(),
                 quantize);
  write_any(path, image.height(), image.width(), 3, bytes);
}

void save_grayscale(const std::filesystem::path& path, std::size_t height,
                    std::size_t width, std::span<const double> values) {
  if (values.size() != height * width)
    throw std::invalid_argument("grayscale buffer size mismatch");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  std::vector<std::uint8_t> bytes(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    bytes[i] = quantize(span > 0.0 ? (values[i] - *lo) / span : 0.0);
  write_any(path, height, width, 1, bytes);
}

}  // namespace tetradat
