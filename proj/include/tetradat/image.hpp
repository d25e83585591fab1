#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace tetradat {

/// H x W x 3 RGB image with channel values in [0, 1], stored row-major with
/// the channel varying fastest.
class Image {
 public:
  static constexpr std::size_t kChannels = 3;

  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0);
  Image(std::size_t height, std::size_t width, std::vector<double> pixels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixel_count() const { return height_ * width_; }
  std::size_t size() const { return pixels_.size(); }

  double& at(std::size_t row, std::size_t col, std::size_t ch) {
    return pixels_[(row * width_ + col) * kChannels + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels_[(row * width_ + col) * kChannels + ch];
  }

  std::span<double> pixel(std::size_t row, std::size_t col) {
    return {pixels_.data() + (row * width_ + col) * kChannels, kChannels};
  }
  std::span<const double> pixel(std::size_t row, std::size_t col) const {
    return {pixels_.data() + (row * width_ + col) * kChannels, kChannels};
  }

  std::span<double> values() { return pixels_; }
  std::span<const double> values() const { return pixels_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Throws std::invalid_argument if any channel lies outside [0, 1].
  void check_range() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> pixels_;
};

struct PixelPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8-bit portable images. The format is chosen from the extension: .png via
// libpng, .ppm/.pgm as binary netpbm. Values are quantized by rounding.
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);

/// Saves an H x W scalar field as grayscale after min-max normalization.
void save_grayscale(const std::filesystem::path& path, std::size_t height,
                    std::size_t width, std::span<const double> values);

}  // namespace tetradat
