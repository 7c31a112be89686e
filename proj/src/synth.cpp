#include "drawcycle/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace drawcycle {

void SynthConfig::validate() const {
  if (image_size < 16 || image_size % 4 != 0) {
    throw std::invalid_argument("synth: image size must be a multiple of 4 and at least 16, got " +
                                std::to_string(image_size));
  }
  for (const CountRange* r : {&rectangles, &polylines, &hatches, &dimensions, &weld_symbols}) {
    if (r->min < 1 || r->max < r->min) {
      throw std::invalid_argument("synth: primitive count ranges need 1 <= min <= max");
    }
  }
  if (circles.max < circles.min) throw std::invalid_argument("synth: bad circle count range");
  if (n_train == 0) throw std::invalid_argument("synth: n_train must be positive");
}

namespace {

struct Rect {
  int x0, y0, x1, y1;  // inclusive corners
};

// Draws strokes into an image and optionally records them in a mask.
class Canvas {
 public:
  Canvas(GrayImage& image, GrayImage* mask) : image_(image), mask_(mask) {}

  void plot(int x, int y) {
    if (x < 0 || y < 0 || x >= static_cast<int>(image_.width) || y >= static_cast<int>(image_.height)) {
      return;
    }
    image_.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 255;
    if (mask_) mask_->at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 255;
  }

  // Bresenham
  void line(int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      plot(x0, y0);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void rect(const Rect& r) {
    line(r.x0, r.y0, r.x1, r.y0);
    line(r.x1, r.y0, r.x1, r.y1);
    line(r.x1, r.y1, r.x0, r.y1);
    line(r.x0, r.y1, r.x0, r.y0);
  }

  // Midpoint circle
  void circle(int cx, int cy, int radius) {
    int x = radius, y = 0, err = 1 - radius;
    while (x >= y) {
      for (auto [px, py] : {std::pair{x, y}, {y, x}, {-y, x}, {-x, y}, {-x, -y}, {-y, -x}, {y, -x}, {x, -y}}) {
        plot(cx + px, cy + py);
      }
      ++y;
      if (err < 0) {
        err += 2 * y + 1;
      } else {
        --x;
        err += 2 * (y - x) + 1;
      }
    }
  }

 private:
  GrayImage& image_;
  GrayImage* mask_;
};

int pick(Rng& rng, int lo, int hi) {
  if (hi <= lo) return lo;
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::size_t pick_count(Rng& rng, const CountRange& r) {
  return r.min + static_cast<std::size_t>(rng.below(r.max - r.min + 1));
}

struct Geometry {
  std::vector<Rect> rects;
  std::vector<std::vector<std::pair<int, int>>> polylines;
  std::vector<std::array<int, 3>> circles;
};

Geometry make_geometry(const SynthConfig& cfg, Rng& rng) {
  const int s = static_cast<int>(cfg.image_size);
  const int margin = std::max(4, s / 8);
  Geometry g;
  const std::size_t n_rect = pick_count(rng, cfg.rectangles);
  for (std::size_t i = 0; i < n_rect; ++i) {
    const int w = pick(rng, s / 5, s / 2);
    const int h = pick(rng, s / 5, s / 2);
    const int x0 = pick(rng, margin, s - margin - w);
    const int y0 = pick(rng, margin, s - margin - h);
    g.rects.push_back({x0, y0, x0 + w, y0 + h});
  }
  const std::size_t n_poly = pick_count(rng, cfg.polylines);
  for (std::size_t i = 0; i < n_poly; ++i) {
    std::vector<std::pair<int, int>> pts;
    const int n = pick(rng, 3, 5);
    for (int k = 0; k < n; ++k) {
      pts.emplace_back(pick(rng, margin, s - margin), pick(rng, margin, s - margin));
    }
    g.polylines.push_back(std::move(pts));
  }
  const std::size_t n_circ = cfg.circles.min + static_cast<std::size_t>(
                                                   rng.below(cfg.circles.max - cfg.circles.min + 1));
  for (std::size_t i = 0; i < n_circ; ++i) {
    const int r = pick(rng, std::max(2, s / 16), std::max(3, s / 6));
    g.circles.push_back({pick(rng, margin + r, s - margin - r), pick(rng, margin + r, s - margin - r), r});
  }
  return g;
}

void draw_geometry(Canvas& c, const Geometry& g) {
  for (const auto& r : g.rects) c.rect(r);
  for (const auto& p : g.polylines) {
    for (std::size_t k = 1; k < p.size(); ++k) c.line(p[k - 1].first, p[k - 1].second, p[k].first, p[k].second);
  }
  for (const auto& ci : g.circles) c.circle(ci[0], ci[1], ci[2]);
}

// Dimension callout along one rectangle edge: extension lines, a dimension
// line offset from the edge, and arrow ticks at both ends.
void draw_dimension(Canvas& c, const Rect& r, bool horizontal, int offset) {
  if (horizontal) {
    const int y = r.y0 - offset;
    c.line(r.x0, r.y0 - 1, r.x0, y - 1);
    c.line(r.x1, r.y0 - 1, r.x1, y - 1);
    c.line(r.x0, y, r.x1, y);
    c.line(r.x0, y, r.x0 + 2, y - 1);
    c.line(r.x0, y, r.x0 + 2, y + 1);
    c.line(r.x1, y, r.x1 - 2, y - 1);
    c.line(r.x1, y, r.x1 - 2, y + 1);
  } else {
    const int x = r.x1 + offset;
    c.line(r.x1 + 1, r.y0, x + 1, r.y0);
    c.line(r.x1 + 1, r.y1, x + 1, r.y1);
    c.line(x, r.y0, x, r.y1);
    c.line(x, r.y0, x - 1, r.y0 + 2);
    c.line(x, r.y0, x + 1, r.y0 + 2);
    c.line(x, r.y1, x - 1, r.y1 - 2);
    c.line(x, r.y1, x + 1, r.y1 - 2);
  }
}

// 45-degree section hatching clipped to the rectangle interior.
void draw_hatch(Canvas& c, const Rect& r, int spacing) {
  for (int y = r.y0 + 1; y < r.y1; ++y) {
    for (int x = r.x0 + 1; x < r.x1; ++x) {
      if ((x + y) % spacing == 0) c.plot(x, y);
    }
  }
}

// Fillet-weld callout: leader from a corner to a reference line carrying a
// triangular weld glyph.
void draw_weld_symbol(Canvas& c, int ax, int ay, int size, int sign) {
  const int ex = ax + sign * size, ey = ay - size;
  c.line(ax, ay, ex, ey);
  const int ref_end = ex + sign * size;
  c.line(ex, ey, ref_end, ey);
  const int mid = (ex + ref_end) / 2;
  const int half = std::max(1, size / 4);
  c.line(mid - half, ey, mid - half, ey + half * 2);
  c.line(mid - half, ey + half * 2, mid + half, ey);
}

}  // namespace

RenderedDrawing render_drawing(const SynthConfig& cfg, std::uint64_t geometry_seed) {
  cfg.validate();
  Rng rng(geometry_seed);
  const Geometry g = make_geometry(cfg, rng);
  RenderedDrawing out{GrayImage(cfg.image_size, cfg.image_size), GrayImage(cfg.image_size, cfg.image_size),
                      GrayImage(cfg.image_size, cfg.image_size)};
  {
    Canvas c(out.outline, nullptr);
    draw_geometry(c, g);
  }
  out.annotated = out.outline;
  Canvas ann(out.annotated, &out.annotation);
  const int s = static_cast<int>(cfg.image_size);
  const int unit = std::max(2, s / 16);

  const std::size_t n_dim = pick_count(rng, cfg.dimensions);
  for (std::size_t i = 0; i < n_dim; ++i) {
    const Rect& r = g.rects[i % g.rects.size()];
    draw_dimension(ann, r, i % 2 == 0, unit + static_cast<int>(i / 2));
  }
  const std::size_t n_hatch = pick_count(rng, cfg.hatches);
  for (std::size_t i = 0; i < n_hatch; ++i) {
    draw_hatch(ann, g.rects[(i + 1) % g.rects.size()], pick(rng, 3, 5));
  }
  const std::size_t n_weld = pick_count(rng, cfg.weld_symbols);
  for (std::size_t i = 0; i < n_weld; ++i) {
    const Rect& r = g.rects[i % g.rects.size()];
    const bool right = r.x1 < s - 2 * unit - 2;
    draw_weld_symbol(ann, right ? r.x1 : r.x0, r.y1, unit + 1, right ? 1 : -1);
  }
  return out;
}

namespace {
constexpr std::uint64_t kStreamX = 1'000'000;
constexpr std::uint64_t kStreamY = 2'000'000;
constexpr std::uint64_t kStreamEval = 3'000'000;
constexpr std::uint64_t kStreamAugment = 4'000'000;
}  // namespace

Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  const std::size_t per_domain = cfg.n_train + cfg.n_test;
  Rng aug(derive_seed(cfg.seed, kStreamAugment));
  for (std::size_t i = 0; i < per_domain; ++i) {
    GrayImage x = render_drawing(cfg, derive_seed(cfg.seed, kStreamX + i)).outline;
    GrayImage y = render_drawing(cfg, derive_seed(cfg.seed, kStreamY + i)).annotated;
    if (cfg.augment) {
      x = augment(x, aug, cfg.augment_ops);
      y = augment(y, aug, cfg.augment_ops);
    }
    ds.domain_x.push_back(std::move(x));
    ds.domain_y.push_back(std::move(y));
  }
  for (std::size_t i = 0; i < cfg.n_test; ++i) {
    auto d = render_drawing(cfg, derive_seed(cfg.seed, kStreamEval + i));
    ds.paired_eval.push_back({std::move(d.outline), std::move(d.annotated)});
  }
  return ds;
}

Splits make_splits(const Dataset& dataset, std::size_t n_train, std::size_t n_test,
                   std::uint64_t seed) {
  if (n_train + n_test > dataset.domain_x.size() || n_train + n_test > dataset.domain_y.size()) {
    throw std::invalid_argument("make_splits: requested " + std::to_string(n_train) + " + " +
                                std::to_string(n_test) + " images exceed the corpus");
  }
  auto split = [&](std::size_t total, std::uint64_t stream, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& test) {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, stream));
    for (std::size_t i = total; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
  };
  Splits s;
  split(dataset.domain_x.size(), 11, s.train_x, s.test_x);
  split(dataset.domain_y.size(), 12, s.train_y, s.test_y);
  return s;
}

Corpus assemble_corpus(const Dataset& dataset, const Splits& splits) {
  Corpus c;
  for (auto i : splits.train_x) c.train_x.push_back(dataset.domain_x.at(i));
  for (auto i : splits.test_x) c.test_x.push_back(dataset.domain_x.at(i));
  for (auto i : splits.train_y) c.train_y.push_back(dataset.domain_y.at(i));
  for (auto i : splits.test_y) c.test_y.push_back(dataset.domain_y.at(i));
  c.eval_pairs = dataset.paired_eval;
  return c;
}

std::string numbered_name(std::size_t index) {
  std::string n = std::to_string(index);
  if (n.size() < 4) n.insert(0, 4 - n.size(), '0');
  return n + ".pgm";
}

namespace {

void write_dir(const std::vector<GrayImage>& images, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) save_image(images[i], dir / numbered_name(i));
}

std::vector<GrayImage> read_dir(const std::filesystem::path& dir) {
  std::vector<GrayImage> out;
  for (const auto& p : list_pgm(dir)) out.push_back(load_image(p));
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  write_dir(corpus.train_x, dir / "trainX");
  write_dir(corpus.train_y, dir / "trainY");
  write_dir(corpus.test_x, dir / "testX");
  write_dir(corpus.test_y, dir / "testY");
  std::vector<GrayImage> ex, ey;
  for (const auto& p : corpus.eval_pairs) {
    ex.push_back(p.x);
    ey.push_back(p.y);
  }
  write_dir(ex, dir / "eval_pairs" / "x");
  write_dir(ey, dir / "eval_pairs" / "y");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir / "trainX") || !std::filesystem::is_directory(dir / "trainY")) {
    throw std::runtime_error("corpus: " + dir.string() + " has no trainX/trainY directories");
  }
  Corpus c;
  c.train_x = read_dir(dir / "trainX");
  c.train_y = read_dir(dir / "trainY");
  if (std::filesystem::is_directory(dir / "testX")) c.test_x = read_dir(dir / "testX");
  if (std::filesystem::is_directory(dir / "testY")) c.test_y = read_dir(dir / "testY");
  if (std::filesystem::is_directory(dir / "eval_pairs" / "x")) {
    const auto ex = read_dir(dir / "eval_pairs" / "x");
    const auto ey = read_dir(dir / "eval_pairs" / "y");
    if (ex.size() != ey.size()) throw std::runtime_error("corpus: eval pair halves differ in count");
    for (std::size_t i = 0; i < ex.size(); ++i) c.eval_pairs.push_back({ex[i], ey[i]});
  }
  if (c.train_x.empty() || c.train_y.empty()) {
    throw std::runtime_error("corpus: " + dir.string() + " has an empty training domain");
  }
  return c;
}

std::vector<std::filesystem::path> list_pgm(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace drawcycle
