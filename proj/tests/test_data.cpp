#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "drawcycle/image.hpp"
#include "drawcycle/synth.hpp"

using namespace drawcycle;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

GrayImage random_image(std::size_t w, std::size_t h, Rng& rng) {
  GrayImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

bool binary(const GrayImage& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(), [](auto p) { return p == 0 || p == 255; });
}

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.image_size = 32;
  c.n_train = 6;
  c.n_test = 3;
  c.seed = seed;
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("drawcycle_data_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("pgm encoding") {
  GrayImage img(2, 2);
  img.pixels = {0, 255, 128, 64};
  const auto bytes = encode_pgm(img);
  const std::string header = "P5\n2 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
  CHECK(std::vector<std::uint8_t>(bytes.end() - 4, bytes.end()) == img.pixels);
  CHECK(decode_pgm(bytes) == img);
}

TEST_CASE("pgm decoding accepts comments and arbitrary whitespace") {
  auto b = bytes_of("P5 # comment\n3\t1\n# another\n255\n");
  b.insert(b.end(), {1, 2, 3});
  const GrayImage img = decode_pgm(b);
  CHECK(img.width == 3);
  CHECK(img.height == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{1, 2, 3});
}

TEST_CASE("pgm errors") {
  CHECK_THROWS_AS(decode_pgm(bytes_of("P2\n2 2\n255\n0 1 2 3\n")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("P6\n1 1\n255\nabc")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("GIF89a")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("P5\n2 2\n65535\n12345678")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("P5\n2 2\n255\nab")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("P5\n2 2")), FormatError);
  CHECK_THROWS_AS(decode_pgm(bytes_of("P5\nx 2\n255\nabcd")), FormatError);
  try {
    decode_pgm(bytes_of("P2\n1 1\n255\n0\n"));
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("P2") != std::string::npos);
  }
}

TEST_CASE("pgm file round trip") {
  TempDir tmp("pgm");
  Rng rng(1);
  const GrayImage img = random_image(7, 5, rng);
  save_image(img, tmp.path / "a.pgm");
  CHECK(load_image(tmp.path / "a.pgm") == img);
  CHECK_THROWS_AS(load_image(tmp.path / "missing.pgm"), FormatError);
  std::ofstream(tmp.path / "bad.pgm") << "P2\n1 1\n255\n0\n";
  try {
    load_image(tmp.path / "bad.pgm");
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad.pgm") != std::string::npos);
  }
}

TEST_CASE("tensor mapping") {
  Rng rng(2);
  const GrayImage img = random_image(8, 4, rng);
  const Tensor t = image_to_tensor(img);
  CHECK(t.shape() == Shape{1, 1, 4, 8});
  for (double v : t.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK(t.data()[0] == doctest::Approx(img.pixels[0] / 127.5 - 1.0));
  CHECK(tensor_to_image(t) == img);
  // Round-half-up at the midpoint between two levels, clamping outside.
  const Tensor mid(Shape{1, 1, 1, 4}, std::vector<double>{(10.5 / 127.5) - 1.0, -3.0, 3.0, -1.0});
  const GrayImage back = tensor_to_image(mid);
  CHECK(back.pixels == std::vector<std::uint8_t>{11, 0, 255, 0});

  const std::vector<GrayImage> batch{img, random_image(8, 4, rng)};
  const Tensor b = images_to_tensor(batch);
  CHECK(b.shape() == Shape{2, 1, 4, 8});
  CHECK(tensor_to_image(b, 1) == batch[1]);
  const std::vector<GrayImage> mixed{img, GrayImage(4, 4)};
  CHECK_THROWS_AS(images_to_tensor(mixed), std::invalid_argument);
}

TEST_CASE("augmentation") {
  Rng rng(3);
  const GrayImage img = random_image(12, 10, rng);
  SUBCASE("identity op-set") {
    Rng r(4);
    CHECK(augment(img, r, AugmentOps{false, 0}) == img);
  }
  SUBCASE("double flip") { CHECK(hflip(hflip(img)) == img); }
  SUBCASE("translate there and back differs only in the border band") {
    const GrayImage back = translate(translate(img, 2, 0), -2, 0);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        if (x >= img.width - 2) {
          CHECK(back.at(x, y) == 0);
        } else {
          CHECK(back.at(x, y) == img.at(x, y));
        }
      }
    }
  }
  SUBCASE("deterministic per seed and bounded shift") {
    const AugmentOps ops{true, 2};
    Rng a(5), b(5);
    for (int i = 0; i < 20; ++i) CHECK(augment(img, a, ops) == augment(img, b, ops));
    // Every outcome is one of the 2 * 5 * 5 flip/shift combinations.
    std::set<std::vector<std::uint8_t>> allowed;
    for (const GrayImage& base : {img, hflip(img)}) {
      for (int dx = -2; dx <= 2; ++dx) {
        for (int dy = -2; dy <= 2; ++dy) allowed.insert(translate(base, dx, dy).pixels);
      }
    }
    Rng c(6);
    std::set<std::vector<std::uint8_t>> seen;
    for (int i = 0; i < 400; ++i) {
      const auto out = augment(img, c, ops).pixels;
      CHECK(allowed.count(out) == 1);
      seen.insert(out);
    }
    CHECK(seen.size() > 25);
  }
}

TEST_CASE("synthetic corpus") {
  const SynthConfig cfg = small_synth(7);
  const Dataset a = synth_generate(cfg);
  SUBCASE("counts and determinism") {
    CHECK(a.domain_x.size() == 9);
    CHECK(a.domain_y.size() == 9);
    CHECK(a.paired_eval.size() == 3);
    const Dataset b = synth_generate(cfg);
    CHECK(a.domain_x == b.domain_x);
    CHECK(a.domain_y == b.domain_y);
    for (std::size_t i = 0; i < a.paired_eval.size(); ++i) {
      CHECK(a.paired_eval[i].x == b.paired_eval[i].x);
      CHECK(a.paired_eval[i].y == b.paired_eval[i].y);
    }
    const Dataset c = synth_generate(small_synth(8));
    CHECK(a.domain_x != c.domain_x);
  }
  SUBCASE("binary line art of the configured size") {
    for (const auto* set : {&a.domain_x, &a.domain_y}) {
      for (const auto& img : *set) {
        CHECK(img.width == 32);
        CHECK(img.height == 32);
        CHECK(binary(img));
        CHECK(std::count(img.pixels.begin(), img.pixels.end(), 255) > 0);
      }
    }
  }
  SUBCASE("eval pairs share geometry") {
    for (const auto& p : a.paired_eval) {
      CHECK(binary(p.x));
      CHECK(binary(p.y));
      CHECK(p.x != p.y);
    }
  }
  SUBCASE("invalid sizes") {
    SynthConfig bad = cfg;
    bad.image_size = 63;
    CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
    bad.image_size = 8;
    CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
    bad = cfg;
    bad.dimensions = {0, 1};
    CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
  }
}

TEST_CASE("annotated rendering equals the outline outside the annotation mask") {
  SynthConfig cfg;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RenderedDrawing d = render_drawing(cfg, seed);
    CHECK(binary(d.outline));
    CHECK(binary(d.annotated));
    std::size_t unmasked = 0, agree = 0, masked = 0;
    for (std::size_t i = 0; i < d.outline.pixels.size(); ++i) {
      if (d.annotation.pixels[i] != 0) {
        ++masked;
        continue;
      }
      ++unmasked;
      agree += d.annotated.pixels[i] == d.outline.pixels[i];
    }
    CHECK(masked > 0);
    CHECK(static_cast<double>(agree) >= 0.95 * static_cast<double>(unmasked));
  }
}

TEST_CASE("splits") {
  const Dataset ds = synth_generate(small_synth(9));
  const Splits s = make_splits(ds, 6, 3, 10);
  CHECK(s.train_x.size() == 6);
  CHECK(s.test_x.size() == 3);
  CHECK(s.train_y.size() == 6);
  CHECK(s.test_y.size() == 3);
  for (const auto& [train, test] : {std::pair{&s.train_x, &s.test_x}, std::pair{&s.train_y, &s.test_y}}) {
    std::set<std::size_t> all(train->begin(), train->end());
    all.insert(test->begin(), test->end());
    CHECK(all.size() == 9);
  }
  const Splits again = make_splits(ds, 6, 3, 10);
  CHECK(again.train_x == s.train_x);
  CHECK(again.test_y == s.test_y);
  const Splits other = make_splits(ds, 6, 3, 11);
  CHECK((other.train_x != s.train_x || other.train_y != s.train_y));
  CHECK_THROWS_AS(make_splits(ds, 8, 3, 10), std::invalid_argument);
}

TEST_CASE("corpus on disk") {
  TempDir tmp("corpus");
  const Dataset ds = synth_generate(small_synth(12));
  const Corpus c = assemble_corpus(ds, make_splits(ds, 6, 3, 13));
  write_corpus(c, tmp.path);
  for (const char* sub : {"trainX", "trainY", "testX", "testY", "eval_pairs/x", "eval_pairs/y"}) {
    CHECK(fs::is_directory(tmp.path / sub));
  }
  CHECK(list_pgm(tmp.path / "trainX").size() == 6);
  CHECK(list_pgm(tmp.path / "testY").size() == 3);
  CHECK(list_pgm(tmp.path / "eval_pairs" / "y").size() == 3);
  const Corpus back = load_corpus(tmp.path);
  CHECK(back.train_x == c.train_x);
  CHECK(back.train_y == c.train_y);
  CHECK(back.test_x == c.test_x);
  CHECK(back.test_y == c.test_y);
  REQUIRE(back.eval_pairs.size() == c.eval_pairs.size());
  CHECK(back.eval_pairs[0].y == c.eval_pairs[0].y);
  CHECK_THROWS_AS(load_corpus(tmp.path / "nowhere"), std::runtime_error);
}
