#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drawcycle/random.hpp"
#include "drawcycle/tensor.hpp"

namespace drawcycle {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width(width), height(height), pixels(width * height, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  bool operator==(const GrayImage&) const = default;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary PGM ("P5", maxval 255) codec.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
GrayImage load_image(const std::filesystem::path& path);
void save_image(const GrayImage& image, const std::filesystem::path& path);

/// Maps pixels to [-1, 1] as a (1, 1, H, W) tensor.
Tensor image_to_tensor(const GrayImage& image);
/// Stacks equally sized images into a (B, 1, H, W) tensor.
Tensor images_to_tensor(std::span<const GrayImage> images);
/// Inverse map with round-half-up and clamping; `index` selects the sample.
GrayImage tensor_to_image(const Tensor& t, std::size_t index = 0);

struct AugmentOps {
  bool hflip = false;
  std::size_t max_shift = 0;  // translation drawn from [-max_shift, max_shift]
};

/// Randomized horizontal flip (probability 1/2) and translation; vacated
/// pixels are filled with 0.
GrayImage augment(const GrayImage& image, Rng& rng, const AugmentOps& ops);
GrayImage hflip(const GrayImage& image);
GrayImage translate(const GrayImage& image, std::ptrdiff_t dx, std::ptrdiff_t dy);

}  // namespace drawcycle
