#include "drawcycle/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace drawcycle {

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw std::invalid_argument("pgm: pixel buffer does not match extents");
  }
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (std::size_t{1} << 32)) throw FormatError(std::string("pgm: ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("pgm: missing ") + what);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("pgm: bad magic number");
  if (bytes[1] != '5') {
    throw FormatError(std::string("pgm: unsupported format P") + static_cast<char>(bytes[1]) +
                      " (only binary P5 is read)");
  }
  HeaderReader r(bytes.subspan(2));
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (maxval != 255) throw FormatError("pgm: maxval " + std::to_string(maxval) + " is not 255");
  // Exactly one whitespace byte separates the header from the raster.
  const std::size_t start = 2 + r.pos();
  if (start >= bytes.size() || !std::isspace(bytes[start])) {
    throw FormatError("pgm: truncated header");
  }
  const std::size_t payload = width * height;
  if (bytes.size() - (start + 1) < payload) {
    throw FormatError("pgm: truncated payload (" + std::to_string(bytes.size() - start - 1) +
                      " of " + std::to_string(payload) + " bytes)");
  }
  GrayImage image(width, height);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(start + 1), payload, image.pixels.begin());
  return image;
}

GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("pgm: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_image(const GrayImage& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("pgm: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("pgm: write failed for " + path.string());
}

Tensor image_to_tensor(const GrayImage& image) {
  return images_to_tensor(std::span<const GrayImage>(&image, 1));
}

Tensor images_to_tensor(std::span<const GrayImage> images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: no images");
  const std::size_t w = images[0].width, h = images[0].height;
  Tensor t(Shape{images.size(), 1, h, w});
  auto d = t.data();
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].width != w || images[b].height != h) {
      throw std::invalid_argument("images_to_tensor: images differ in size");
    }
    for (std::size_t i = 0; i < w * h; ++i) {
      d[b * w * h + i] = images[b].pixels[i] / 127.5 - 1.0;
    }
  }
  return t;
}

GrayImage tensor_to_image(const Tensor& t, std::size_t index) {
  if (t.dim() != 4 || t.extent(1) != 1 || index >= t.extent(0)) {
    throw std::invalid_argument("tensor_to_image: expected (B, 1, H, W) tensor, got " +
                                shape_str(t.shape()));
  }
  const std::size_t h = t.extent(2), w = t.extent(3);
  GrayImage image(w, h);
  const auto d = t.data();
  for (std::size_t i = 0; i < w * h; ++i) {
    const double v = std::floor((d[index * w * h + i] + 1.0) * 127.5 + 0.5);
    image.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return image;
}

GrayImage hflip(const GrayImage& image) {
  GrayImage out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      out.at(x, y) = image.at(image.width - 1 - x, y);
    }
  }
  return out;
}

GrayImage translate(const GrayImage& image, std::ptrdiff_t dx, std::ptrdiff_t dy) {
  GrayImage out(image.width, image.height, 0);
  const auto w = static_cast<std::ptrdiff_t>(image.width);
  const auto h = static_cast<std::ptrdiff_t>(image.height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    const std::ptrdiff_t sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const std::ptrdiff_t sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      out.pixels[static_cast<std::size_t>(y * w + x)] =
          image.pixels[static_cast<std::size_t>(sy * w + sx)];
    }
  }
  return out;
}

GrayImage augment(const GrayImage& image, Rng& rng, const AugmentOps& ops) {
  GrayImage out = image;
  if (ops.hflip && rng.uniform() < 0.5) out = hflip(out);
  if (ops.max_shift > 0) {
    const auto span = 2 * ops.max_shift + 1;
    const auto dx = static_cast<std::ptrdiff_t>(rng.below(span)) -
                    static_cast<std::ptrdiff_t>(ops.max_shift);
    const auto dy = static_cast<std::ptrdiff_t>(rng.below(span)) -
                    static_cast<std::ptrdiff_t>(ops.max_shift);
    out = translate(out, dx, dy);
  }
  return out;
}

}  // namespace drawcycle
