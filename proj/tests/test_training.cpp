#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drawcycle/training.hpp"
#include "support.hpp"

using namespace drawcycle;
namespace fs = std::filesystem;

namespace {

// Smallest extent the five-layer PatchGAN accepts is 32.
TrainConfig toy_config(std::uint64_t seed, GeneratorVariant v = GeneratorVariant::sparse_kwinners) {
  TrainConfig c;
  c.image_size = 32;
  c.width = 4;
  c.n_res = 1;
  c.d_width = 4;
  c.variant = v;
  c.epochs_total = 3;
  c.epochs_const = 1;
  c.pool_size = 3;
  c.seed = seed;
  return c;
}

GrayImage random_drawing(std::size_t size, Rng& rng) {
  GrayImage img(size, size, 0);
  for (auto& p : img.pixels) p = rng.uniform() < 0.2 ? 255 : 0;
  return img;
}

TrainData toy_data(std::size_t nx, std::size_t ny, std::uint64_t seed, std::size_t size = 32) {
  Rng rng(seed);
  TrainData d;
  for (std::size_t i = 0; i < nx; ++i) d.x.push_back(random_drawing(size, rng));
  for (std::size_t i = 0; i < ny; ++i) d.y.push_back(random_drawing(size, rng));
  return d;
}

std::vector<std::vector<double>> values_of(const StateList& st) {
  std::vector<std::vector<double>> out;
  for (const auto& e : st) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

bool same_bundle(const LossBundle& a, const LossBundle& b) {
  return a.gan_g_xy == b.gan_g_xy && a.gan_g_yx == b.gan_g_yx && a.gan_d_x == b.gan_d_x &&
         a.gan_d_y == b.gan_d_y && a.cyc == b.cyc && a.idt == b.idt && a.total_g == b.total_g;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("drawcycle_training_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(lr_at_epoch(c, 0) == 0.0002);
  CHECK(lr_at_epoch(c, 100) == 0.0002);
  CHECK(lr_at_epoch(c, 150) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(lr_at_epoch(c, 200) == 0.0);
  CHECK_THROWS_AS(lr_at_epoch(c, 201), std::invalid_argument);
  // Continuous at the knee and non-increasing throughout.
  CHECK(std::fabs(lr_at_epoch(c, 101) - lr_at_epoch(c, 100)) <= c.lr0 / 100 + 1e-18);
  for (std::size_t e = 1; e <= c.epochs_total; ++e) CHECK(lr_at_epoch(c, e) <= lr_at_epoch(c, e - 1));
  c.epochs_const = c.epochs_total;
  CHECK(lr_at_epoch(c, 200) == 0.0002);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p(Shape{3}, std::vector<double>{0.5, -1.0, 2.0}, true);
  std::vector<Tensor> params{p};
  AdamState s = AdamState::for_params(params);
  p.zero_grad();
  (void)p.mutable_grad();
  adam_step(params, s, AdamHyper{}, 0.1);
  CHECK(p.data()[0] == 0.5);
  CHECK(p.data()[1] == -1.0);
  CHECK(p.data()[2] == 2.0);
  CHECK(s.t == 1);
}

TEST_CASE("adam: first step moves by lr * g / (|g| + eps)") {
  const std::vector<double> g{3.0, -0.25, 1e-6, -40.0};
  Tensor p(Shape{4}, std::vector<double>{1, 1, 1, 1}, true);
  std::vector<Tensor> params{p};
  AdamState s = AdamState::for_params(params);
  auto gb = p.mutable_grad();
  std::copy(g.begin(), g.end(), gb.begin());
  const AdamHyper h;
  const double lr = 0.0002;
  adam_step(params, s, h, lr);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double delta = p.data()[i] - 1.0;
    CHECK(std::fabs(delta + lr * g[i] / (std::fabs(g[i]) + h.eps)) < 1e-12);
  }
}

TEST_CASE("adam: ten steps on p^2 match a scalar trace") {
  const AdamHyper h{0.5, 0.999, 1e-8};
  const double lr = 0.1;
  Tensor p = Tensor::scalar(1.0, true);
  std::vector<Tensor> params{p};
  AdamState s = AdamState::for_params(params);

  // Independent trace with the step size folded into lr_t.
  double q = 1.0, m = 0, v = 0, b1t = 1, b2t = 1;
  for (int t = 1; t <= 10; ++t) {
    p.zero_grad();
    Tape tape;
    const Tensor loss = mul(tape, p, p);
    tape.backward(loss);
    adam_step(params, s, h, lr);

    const double g = 2 * q;
    m = h.beta1 * m + (1 - h.beta1) * g;
    v = h.beta2 * v + (1 - h.beta2) * g * g;
    b1t *= h.beta1;
    b2t *= h.beta2;
    const double lr_t = lr * std::sqrt(1 - b2t) / (1 - b1t);
    q -= lr_t * m / (std::sqrt(v) + h.eps * std::sqrt(1 - b2t));
    CHECK(std::fabs(p.item() - q) < 1e-12);
  }
  CHECK(s.t == 10);
}

TEST_CASE("adam: state must match the parameters") {
  Tensor p(Shape{2, 2}, true);
  std::vector<Tensor> params{p};
  Tensor other(Shape{3});
  std::vector<Tensor> wrong{other};
  AdamState s = AdamState::for_params(wrong);
  CHECK_THROWS_AS(adam_step(params, s, AdamHyper{}, 0.1), std::invalid_argument);
  AdamState empty;
  CHECK_THROWS_AS(adam_step(params, empty, AdamHyper{}, 0.1), std::invalid_argument);
}

TEST_CASE("image pool") {
  auto img = [](double v) { return Tensor::full({1, 1, 2, 2}, v); };
  SUBCASE("capacity 0 always returns the fresh image") {
    ImagePool pool(0, 1);
    for (int i = 0; i < 20; ++i) CHECK(pool.query(img(i)).data()[0] == i);
    CHECK(pool.size() == 0);
  }
  SUBCASE("first capacity queries return their inputs") {
    ImagePool pool(5, 2);
    for (int i = 0; i < 5; ++i) CHECK(pool.query(img(i)).data()[0] == i);
    CHECK(pool.size() == 5);
  }
  SUBCASE("swap frequency at capacity") {
    ImagePool pool(10, 3);
    for (int i = 0; i < 10; ++i) pool.query(img(-1));
    const int n = 10000;
    int swapped = 0;
    for (int i = 0; i < n; ++i) {
      const double fresh = i;
      swapped += pool.query(img(fresh)).data()[0] != fresh;
      CHECK(pool.size() <= 10);
    }
    CHECK(std::fabs(static_cast<double>(swapped) / n - 0.5) < 0.02);
  }
  SUBCASE("stored images are independent copies") {
    ImagePool pool(1, 4);
    Tensor t = img(7);
    pool.query(t);
    t.data()[0] = 9;
    CHECK(pool.images()[0].data()[0] == 7);
  }
  SUBCASE("rejects batches") {
    ImagePool pool(1, 5);
    CHECK_THROWS_AS(pool.query(Tensor::full({2, 1, 2, 2}, 0.0)), std::invalid_argument);
  }
}

TEST_CASE("train_step with lr 0 leaves every parameter bit-identical") {
  Trainer tr(toy_config(3));
  const TrainData d = toy_data(1, 1, 4);
  std::vector<std::vector<double>> before;
  for (const auto& e : tr.full_state()) {
    if (e.trainable) before.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  }
  const LossBundle l = tr.train_step(image_to_tensor(d.x[0]), image_to_tensor(d.y[0]), 0.0);
  std::size_t i = 0;
  for (const auto& e : tr.full_state()) {
    if (!e.trainable) continue;
    const std::vector<double> now(e.tensor.data().begin(), e.tensor.data().end());
    CHECK_MESSAGE(now == before[i], e.name);
    ++i;
  }
  CHECK(std::isfinite(l.total_g));
  CHECK(l.total_g > 0);
  CHECK(l.gan_d_x > 0);
  CHECK(l.gan_d_y > 0);
  CHECK_FALSE(l.idt.has_value());
}

TEST_CASE("train_step rejects mis-sized batches") {
  Trainer tr(toy_config(3));
  CHECK_THROWS_AS(tr.train_step(Tensor({1, 1, 16, 16}), Tensor({1, 1, 32, 32}), 0.0), std::invalid_argument);
}

TEST_CASE("identical seeds give identical loss sequences") {
  for (auto v : {GeneratorVariant::sparse_kwinners, GeneratorVariant::dense_relu}) {
    CAPTURE(to_string(v));
    TrainConfig c = toy_config(9, v);
    c.idt_enabled = v == GeneratorVariant::dense_relu;
    c.d_activation = DiscriminatorActivation::rrelu;
    const TrainData d = toy_data(3, 2, 10);
    const auto a = train_run(c, d).history;
    const auto b = train_run(c, d).history;
    REQUIRE(a.size() == c.epochs_total);
    REQUIRE(b.size() == a.size());
    for (std::size_t e = 0; e < a.size(); ++e) CHECK(same_bundle(a[e].losses, b[e].losses));
    CHECK(a[0].losses.idt.has_value() == c.idt_enabled);
    c.seed = 10;
    const auto other = train_run(c, d).history;
    CHECK_FALSE(same_bundle(a[0].losses, other[0].losses));
  }
}

TEST_CASE("one generator step descends the generator objective") {
  const int trials = 50;
  int descended = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const TrainConfig c = toy_config(100 + trial);
    Trainer tr(c);
    const TrainData d = toy_data(1, 1, 500 + trial);
    const Tensor x = image_to_tensor(d.x[0]);
    const Tensor y = image_to_tensor(d.y[0]);

    // Everything except the generator weights is put back before the
    // re-evaluation: discriminator weights, duty cycles and RReLU streams.
    const StateList st = tr.full_state();
    const auto snap = values_of(st);
    std::vector<std::string> rng_states;
    for (auto* net : {&tr.nets().d_x, &tr.nets().d_y}) {
      for (Rng* r : net->rngs()) rng_states.push_back(r->state());
    }
    const LossBundle before = tr.train_step(x, y, c.lr0);
    for (std::size_t i = 0; i < st.size(); ++i) {
      const bool generator_weight = st[i].trainable && st[i].name.rfind("g_", 0) == 0;
      if (generator_weight) continue;
      Tensor t = st[i].tensor;
      std::copy(snap[i].begin(), snap[i].end(), t.data().begin());
    }
    std::size_t k = 0;
    for (auto* net : {&tr.nets().d_x, &tr.nets().d_y}) {
      for (Rng* r : net->rngs()) r->set_state(rng_states[k++]);
    }
    Tape tape;
    const double after = generator_objective(tape, tr.nets(), c, x, y).values.total_g;
    descended += after < before.total_g;
  }
  MESSAGE("descended in " << descended << " of " << trials << " trials");
  CHECK(descended >= trials * 8 / 10);
}

TEST_CASE("train_run bookkeeping") {
  TrainConfig c = toy_config(12);
  const TrainData d = toy_data(3, 5, 13);
  SUBCASE("zero epochs returns initialized nets and no history") {
    c.epochs_total = 0;
    c.epochs_const = 0;
    TrainResult r = train_run(c, d);
    CHECK(r.history.empty());
    CHECK(r.trainer.global_step() == 0);
    const Trainer fresh(c);
    CHECK(values_of(r.trainer.full_state()) == values_of(fresh.full_state()));
  }
  SUBCASE("history length and step count") {
    c.batch_size = 2;
    std::vector<std::size_t> seen;
    TrainResult r = train_run(c, d, [&](const EpochRecord& rec, Trainer&) { seen.push_back(rec.epoch); });
    CHECK(r.history.size() == c.epochs_total);
    CHECK(seen == std::vector<std::size_t>{1, 2, 3});
    CHECK(r.trainer.global_step() == c.epochs_total * 3);  // ceil(5 / 2)
    for (const auto& rec : r.history) {
      CHECK(std::isfinite(rec.losses.total_g));
      CHECK(rec.losses.total_g ==
            doctest::Approx(rec.losses.gan_g_xy + rec.losses.gan_g_yx + c.lambda_cyc * rec.losses.cyc));
    }
  }
  SUBCASE("empty dataset is rejected") {
    TrainData empty;
    empty.x = d.x;
    CHECK_THROWS_AS(train_run(c, empty), std::invalid_argument);
  }
}

TEST_CASE("masked weights stay exactly zero through training") {
  TrainConfig c = toy_config(14);
  TrainResult r = train_run(c, toy_data(2, 2, 15));
  for (auto* g : {&r.trainer.nets().g_xy, &r.trainer.nets().g_yx}) {
    for (const auto* sc : g->sparse_convs()) {
      const auto w = sc->conv.weight.data();
      const auto m = sc->mask.data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (m[i] == 0.0) REQUIRE(w[i] == 0.0);
      }
    }
  }
}

TEST_CASE("losses CSV") {
  EpochRecord r;
  r.epoch = 2;
  r.losses.gan_g_xy = 0.5;
  r.losses.gan_g_yx = 0.25;
  r.losses.gan_d_x = 0.125;
  r.losses.gan_d_y = 1;
  r.losses.cyc = 0.1;
  r.losses.total_g = 1.75;
  std::ostringstream os;
  std::vector<EpochRecord> h{r};
  write_losses_csv(h, os);
  CHECK(os.str() == "epoch,gan_g_xy,gan_g_yx,gan_d_x,gan_d_y,cyc,idt,total_g\n"
                    "2,0.5,0.25,0.125,1,0.10000000000000001,,1.75\n");
}

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir tmp("roundtrip");
  const TrainConfig c = toy_config(16);
  const TrainData d = toy_data(2, 2, 17);
  Trainer a(c);
  a.run_epoch(d);
  const fs::path ck = tmp.path / "a.bin";
  a.save_checkpoint(ck);
  CHECK_FALSE(fs::exists(tmp.path / "a.bin.tmp"));

  Trainer b(c);
  b.load_checkpoint(ck);
  CHECK(values_of(a.full_state()) == values_of(b.full_state()));
  CHECK(b.epochs_done() == 1);
  CHECK(b.global_step() == a.global_step());
  CHECK(b.adam_g().t == a.adam_g().t);
  CHECK(to_config_text(read_checkpoint_config(ck)) == to_config_text(c));

  const Tensor x = image_to_tensor(d.x[0]);
  for (Trainer* t : {&a, &b}) t->nets().g_xy.set_training(false);
  Tape t1, t2;
  const Tensor fa = a.nets().g_xy.forward(t1, x);
  const Tensor fb = b.nets().g_xy.forward(t2, x);
  CHECK(std::equal(fa.data().begin(), fa.data().end(), fb.data().begin()));
}

TEST_CASE("resume reproduces the unbroken run") {
  TempDir tmp("resume");
  TrainConfig c = toy_config(18);
  c.idt_enabled = true;
  const TrainData d = toy_data(3, 2, 19);
  const auto unbroken = train_run(c, d).history;

  Trainer first(c);
  first.run_epoch(d);
  first.save_checkpoint(tmp.path / "e1.bin");
  Trainer resumed(c);
  resumed.load_checkpoint(tmp.path / "e1.bin");
  const auto rest = resumed.run(d);
  REQUIRE(rest.size() == c.epochs_total - 1);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    CHECK(rest[i].epoch == unbroken[i + 1].epoch);
    CHECK(same_bundle(rest[i].losses, unbroken[i + 1].losses));
  }
}

TEST_CASE("checkpoint errors") {
  TempDir tmp("errors");
  const TrainConfig c = toy_config(20);
  Trainer a(c);
  const fs::path ck = tmp.path / "a.bin";
  a.save_checkpoint(ck);

  SUBCASE("mismatched width") {
    TrainConfig wide = c;
    wide.width = 8;
    Trainer b(wide);
    const auto before = values_of(b.full_state());
    try {
      b.load_checkpoint(ck);
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
    }
    CHECK(values_of(b.full_state()) == before);
  }
  SUBCASE("missing file") {
    Trainer b(c);
    CHECK_THROWS_AS(b.load_checkpoint(tmp.path / "nope.bin"), std::runtime_error);
  }
  SUBCASE("truncated file") {
    const auto size = fs::file_size(ck);
    fs::resize_file(ck, size / 2);
    Trainer b(c);
    CHECK_THROWS_AS(b.load_checkpoint(ck), std::runtime_error);
  }
  SUBCASE("bad magic") {
    std::fstream f(ck, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    Trainer b(c);
    CHECK_THROWS_AS(b.load_checkpoint(ck), std::runtime_error);
    CHECK_THROWS_AS(read_checkpoint_config(ck), std::runtime_error);
  }
}

TEST_CASE("config text") {
  SUBCASE("round trip") {
    TrainConfig c = toy_config(21);
    c.lr0 = 0.00012345678901234567;
    c.idt_enabled = true;
    c.sparsity.k_fraction = 0.25;
    c.gan_mode = GanMode::minimax;
    const TrainConfig back = parse_config_text(to_config_text(c));
    CHECK(to_config_text(back) == to_config_text(c));
    CHECK(back.lr0 == c.lr0);
  }
  SUBCASE("comments, booleans and defaults") {
    const TrainConfig c = parse_config_text("# run\nidt_enabled = on  # inline\n\nwidth=8\n");
    CHECK(c.idt_enabled);
    CHECK(c.width == 8);
    CHECK(c.lr0 == 0.0002);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_config_text("learning_rate = 0.1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("width = 4\nwidth = 8\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("width = four\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("width\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("epochs_total = 5\nepochs_const = 6\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("image_size = 30\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("image_size = 16\n"), std::invalid_argument);
  }
  SUBCASE("presets") {
    const TrainConfig f = preset_finetuned();
    CHECK_FALSE(f.idt_enabled);
    CHECK(f.variant == GeneratorVariant::sparse_kwinners);
    CHECK(f.n_res == 12);
    CHECK(f.lambda_cyc == 10);
    CHECK(f.lr0 == 0.0002);
    CHECK(f.adam_beta2 == 0.999);
    CHECK(f.epochs_total == 200);
    CHECK(f.epochs_const == 100);
    CHECK(preset_baseline().idt_enabled);
    CHECK(preset_baseline().variant == GeneratorVariant::dense_relu);
    CHECK_FALSE(preset_no_idt().idt_enabled);
    CHECK(preset_no_idt().variant == GeneratorVariant::dense_relu);
    const TrainConfig desk = desk_preset(f);
    CHECK(desk.image_size == 64);
    CHECK(desk.n_res == 3);
    CHECK(desk_preset(preset_baseline()).n_res == 2);
    for (const auto& p : {preset_baseline(), preset_no_idt(), preset_finetuned(), desk}) {
      CHECK_NOTHROW(p.validate());
    }
  }
}
