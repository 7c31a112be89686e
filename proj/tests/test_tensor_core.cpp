#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "drawcycle/ops.hpp"
#include "support.hpp"

using namespace drawcycle;
using testsupport::grad_check;
using testsupport::Probe;
using testsupport::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Direct nested-sum cross-correlation, independent of the im2col path.
std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t s,
                                 std::size_t p) {
  const std::size_t B = x.extent(0), I = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = w.extent(0), K = w.extent(2);
  const std::size_t OH = (H + 2 * p - K) / s + 1, OW = (W + 2 * p - K) / s + 1;
  std::vector<double> out(B * O * OH * OW, 0.0);
  const auto xd = x.data();
  const auto wd = w.data();
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          for (std::size_t i = 0; i < I; ++i)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
                const long ix = static_cast<long>(ox * s + kx) - static_cast<long>(p);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                acc += xd[((n * I + i) * H + iy) * W + ix] * wd[((o * I + i) * K + ky) * K + kx];
              }
          out[((n * O + o) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

// Scatter-sum transposed convolution: each input element adds w * x into
// the output window it maps to.
std::vector<double> naive_conv_transpose2d(const Tensor& x, const Tensor& w, std::size_t s, std::size_t p) {
  const std::size_t B = x.extent(0), I = x.extent(1), H = x.extent(2), W = x.extent(3);
  const std::size_t O = w.extent(1), K = w.extent(2);
  const std::size_t OH = (H - 1) * s + K - 2 * p, OW = (W - 1) * s + K - 2 * p;
  std::vector<double> out(B * O * OH * OW, 0.0);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long oy = static_cast<long>(y * s + ky) - static_cast<long>(p);
                const long ox = static_cast<long>(xx * s + kx) - static_cast<long>(p);
                if (oy < 0 || ox < 0 || oy >= static_cast<long>(OH) || ox >= static_cast<long>(OW)) continue;
                out[((n * O + o) * OH + oy) * OW + ox] +=
                    x.data()[((n * I + i) * H + y) * W + xx] * w.data()[((i * O + o) * K + ky) * K + kx];
              }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

TEST_CASE("tensor shape invariants and handle semantics") {
  Tensor t(Shape{2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.data().size() == 6);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor alias = t;
  alias.data()[0] = 5;
  CHECK(t.data()[0] == 5);
  Tensor copy = t.clone();
  copy.data()[0] = 1;
  CHECK(t.data()[0] == 5);
  CHECK(t.mutable_grad().size() == 6);
  CHECK(shape_str(Shape{1, 2, 3}) == "(1, 2, 3)");
}

TEST_CASE("ew_binary examples") {
  Tape tape;
  Tensor a(Shape{2}, {1, 2}), b(Shape{2}, {3, 4});
  CHECK(values(add(tape, a, b)) == std::vector<double>{4, 6});

  Rng rng(1);
  Tensor x = random_tensor({5}, rng);
  Tensor z(Shape{5});
  Tensor prod = mul(tape, x, z);
  for (double v : prod.data()) CHECK(v == 0.0);
  Tensor root = sum(tape, prod);
  tape.backward(root);
  for (double g : x.grad()) CHECK(g == 0.0);

  Tape t2;
  const Tensor diff = sub(t2, x, x);
  for (double v : diff.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(add(t2, Tensor(Shape{2}), Tensor(Shape{3})), std::invalid_argument);
  Tensor s = add(t2, a, Tensor::scalar(10));
  CHECK(values(s) == std::vector<double>{11, 12});
}

TEST_CASE("ew_unary examples") {
  Tape tape;
  CHECK(tanh(tape, Tensor::scalar(0.0)).item() == 0.0);
  CHECK(softplus(tape, Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus(tape, Tensor::scalar(0.0)).item() == doctest::Approx(0.693147).epsilon(1e-6));

  Tensor x = Tensor::scalar(-3.5, true);
  Tensor y = abs(tape, x);
  CHECK(y.item() == 3.5);
  tape.backward(y);
  CHECK(x.grad()[0] == -1.0);

  Tape t2;
  Tensor zero = Tensor::scalar(0.0, true);
  Tensor az = abs(t2, zero);
  t2.backward(az);
  CHECK(zero.grad()[0] == 0.0);

  CHECK_THROWS_AS(log(t2, Tensor(Shape{2}, {1.0, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(log(t2, Tensor(Shape{1}, std::vector<double>{-1.0})), std::invalid_argument);

  // Large magnitudes stay finite.
  CHECK(softplus(t2, Tensor::scalar(800.0)).item() == 800.0);
  CHECK(softplus(t2, Tensor::scalar(-800.0)).item() == doctest::Approx(0.0));
  CHECK(std::isfinite(sigmoid(t2, Tensor::scalar(-800.0)).item()));
}

TEST_CASE("reduce examples") {
  Tape tape;
  CHECK(mean(tape, Tensor(Shape{3}, {2, 4, 6})).item() == 4.0);
  CHECK(sum(tape, Tensor(Shape{4})).item() == 0.0);
  Tensor x(Shape{4}, {1, 2, 3, 4}, true);
  Tensor m = mean(tape, x);
  tape.backward(m);
  for (double g : x.grad()) CHECK(g == 0.25);
  CHECK_THROWS_AS(mean(tape, Tensor(Shape{0})), std::invalid_argument);
}

TEST_CASE("backward examples and accumulation") {
  Tensor x(Shape{3}, {1, -2, 5}, true);
  {
    Tape tape;
    Tensor s = sum(tape, x);
    tape.backward(s);
  }
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y(Shape{2}, {1, 2}, true);
  Tape tape;
  Tensor m = mean(tape, mul(tape, y, y));
  tape.backward(m);
  CHECK(values(Tensor(Shape{2}, {y.grad()[0], y.grad()[1]})) == std::vector<double>{1, 2});
  tape.backward(m);
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  Tensor vec = mul(tape, y, y);
  CHECK_THROWS_AS(tape.backward(vec), std::invalid_argument);
  Tape other;
  CHECK_THROWS_AS(other.backward(m), std::invalid_argument);
}

TEST_CASE("zero_grad cases") {
  Tensor a(Shape{2}, {1, 2}, true), b(Shape{3}, {3, 4, 5}, true);
  a.mutable_grad()[0] = 7;
  b.mutable_grad()[2] = 8;
  std::vector<Tensor> ps{a, b};
  zero_grad(ps);
  for (double g : a.grad()) CHECK(g == 0.0);
  for (double g : b.grad()) CHECK(g == 0.0);
  zero_grad(ps);
  CHECK(a.data()[1] == 2.0);
  std::vector<Tensor> none;
  zero_grad(none);
}

TEST_CASE("tape records only differentiable work and clears") {
  Tape tape;
  Tensor c(Shape{2}, {1, 2});
  add(tape, c, c);
  CHECK(tape.size() == 0);
  Tensor p(Shape{2}, {1, 2}, true);
  add(tape, p, c);
  CHECK(tape.size() == 1);
  tape.clear();
  CHECK(tape.size() == 0);
  CHECK(p.data()[1] == 2.0);
}

TEST_CASE("conv2d examples") {
  Tape tape;
  Rng rng(3);
  Tensor x = random_tensor({2, 1, 4, 5}, rng);
  Tensor one(Shape{1, 1, 1, 1}, std::vector<double>{1.0});
  CHECK(values(conv2d(tape, x, one, Tensor(), 1, 0)) == values(x));

  Tensor zeros(Shape{1, 2, 4, 4});
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b(Shape{3}, {0.5, -1.0, 2.0});
  Tensor y = conv2d(tape, zeros, w, b, 1, 1);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 16; ++i) CHECK(y.data()[o * 16 + i] == b.data()[o]);

  Tensor img(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k(Shape{1, 1, 2, 2}, {1, 0, 0, 1});
  Tensor out = conv2d(tape, img, k, Tensor(), 1, 0);
  CHECK(out.shape() == Shape{1, 1, 2, 2});
  CHECK(values(out) == std::vector<double>{6, 8, 12, 14});

  CHECK_THROWS_AS(conv2d(tape, img, random_tensor({1, 2, 2, 2}, rng), Tensor(), 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(tape, img, random_tensor({1, 1, 5, 5}, rng), Tensor(), 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d matches the nested-sum oracle across strides and padding") {
  Rng rng(11);
  for (auto [s, p, k] : {std::tuple{1, 0, 3}, std::tuple{2, 1, 3}, std::tuple{2, 1, 4}, std::tuple{1, 3, 7},
                         std::tuple{3, 2, 5}}) {
    Tensor x = random_tensor({2, 3, 9, 8}, rng);
    Tensor w = random_tensor({4, 3, std::size_t(k), std::size_t(k)}, rng);
    Tensor b = random_tensor({4}, rng);
    Tape tape;
    Tensor y = conv2d(tape, x, w, b, s, p);
    const auto ref = naive_conv2d(x, w, b, s, p);
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_transpose2d examples and oracle") {
  Tape tape;
  Rng rng(5);
  Tensor x = random_tensor({1, 1, 3, 4}, rng);
  Tensor one(Shape{1, 1, 1, 1}, std::vector<double>{1.0});
  CHECK(values(conv_transpose2d(tape, x, one, Tensor(), 1, 0)) == values(x));

  Tensor small(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor ones = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor up = conv_transpose2d(tape, small, ones, Tensor(), 2, 0);
  CHECK(up.shape() == Shape{1, 1, 4, 4});
  CHECK(values(up) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});

  for (auto [s, p, k] : {std::tuple{2, 1, 4}, std::tuple{1, 1, 3}, std::tuple{2, 0, 3}, std::tuple{3, 1, 5}}) {
    Tensor in = random_tensor({2, 3, 4, 5}, rng);
    Tensor w = random_tensor({3, 2, std::size_t(k), std::size_t(k)}, rng);
    Tensor y = conv_transpose2d(tape, in, w, Tensor(), s, p);
    const auto ref = naive_conv_transpose2d(in, w, s, p);
    REQUIRE(y.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  Tensor in = random_tensor({1, 4, 8, 8}, rng);
  Tensor y = conv_transpose2d(tape, in, random_tensor({4, 2, 4, 4}, rng), random_tensor({2}, rng), 2, 1);
  CHECK(y.shape() == Shape{1, 2, 16, 16});
}

TEST_CASE("conv2d and conv_transpose2d are adjoint") {
  Rng rng(9);
  for (auto [s, p] : {std::pair{1, 0}, std::pair{2, 1}, std::pair{1, 2}}) {
    Tensor x = random_tensor({2, 3, 8, 8}, rng, -1, 1, false);
    Tensor w = random_tensor({4, 3, 4, 4}, rng, -1, 1, false);
    Tape tape;
    Tensor cx = conv2d(tape, x, w, Tensor(), s, p);
    Tensor y = random_tensor(cx.shape(), rng, -1, 1, false);
    Tensor ty = conv_transpose2d(tape, y, w, Tensor(), s, p);
    REQUIRE(ty.shape() == x.shape());
    CHECK(std::abs(dot(cx, y) - dot(x, ty)) < 1e-10);
  }
}

TEST_CASE("reflect_pad examples") {
  Tape tape;
  Tensor row(Shape{1, 1, 1, 3}, {1, 2, 3});
  // A single row cannot be padded vertically; use a 3x3 image and read the middle row.
  Tensor img(Shape{1, 1, 3, 3}, {1, 2, 3, 1, 2, 3, 1, 2, 3});
  Tensor p = reflect_pad(tape, img, 1);
  CHECK(p.shape() == Shape{1, 1, 5, 5});
  std::vector<double> mid(p.data().begin() + 10, p.data().begin() + 15);
  CHECK(mid == std::vector<double>{2, 1, 2, 3, 2});
  CHECK(values(reflect_pad(tape, img, 0)) == values(img));
  CHECK_THROWS_AS(reflect_pad(tape, img, 3), std::invalid_argument);
  CHECK_THROWS_AS(reflect_pad(tape, row, 1), std::invalid_argument);
}

TEST_CASE("gradient oracle: elementwise, reductions and padding") {
  Rng rng(21);
  Probe probe({2, 3}, 100);
  Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  Tensor pos = random_tensor({2, 3}, rng, 0.2, 2.0);
  Tensor s = random_tensor({1}, rng);

  for (auto kind : {BinaryKind::add, BinaryKind::sub, BinaryKind::mul}) {
    auto r = grad_check([&](Tape& t) { return probe(t, ew_binary(t, a, b, kind)); }, {a, b});
    CHECK(r.max_rel_error < 1e-4);
    auto rb = grad_check([&](Tape& t) { return probe(t, ew_binary(t, a, s, kind)); }, {a, s});
    CHECK(rb.max_rel_error < 1e-4);
  }
  for (auto kind : {UnaryKind::neg, UnaryKind::abs, UnaryKind::tanh, UnaryKind::sigmoid, UnaryKind::softplus}) {
    auto r = grad_check([&](Tape& t) { return probe(t, ew_unary(t, a, kind)); }, {a});
    CHECK(r.max_rel_error < 1e-4);
  }
  auto rl = grad_check([&](Tape& t) { return probe(t, log(t, pos)); }, {pos});
  CHECK(rl.max_rel_error < 1e-4);
  auto rm = grad_check([&](Tape& t) { return mean(t, mul(t, a, a)); }, {a});
  CHECK(rm.max_rel_error < 1e-4);
  auto rs = grad_check([&](Tape& t) { return sum(t, tanh(t, a)); }, {a});
  CHECK(rs.max_rel_error < 1e-4);
  auto rc = grad_check([&](Tape& t) { return probe(t, scale(t, a, -2.5)); }, {a});
  CHECK(rc.max_rel_error < 1e-4);

  Tensor img = random_tensor({1, 1, 4, 4}, rng);
  Probe pprobe({1, 1, 8, 8}, 101);
  auto rp = grad_check([&](Tape& t) { return pprobe(t, reflect_pad(t, img, 2)); }, {img});
  CHECK(rp.max_rel_error < 1e-4);
}

TEST_CASE("gradient oracle: convolutions") {
  Rng rng(31);
  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Probe probe({2, 3, 3, 3}, 102);
  auto r = grad_check([&](Tape& t) { return probe(t, conv2d(t, x, w, b, 2, 1)); }, {x, w, b}, {"x", "w", "b"});
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);

  Tensor xt = random_tensor({2, 3, 3, 3}, rng);
  Tensor wt = random_tensor({3, 2, 4, 4}, rng);
  Tensor bt = random_tensor({2}, rng);
  Probe tprobe({2, 2, 6, 6}, 103);
  auto rt = grad_check([&](Tape& t) { return tprobe(t, conv_transpose2d(t, xt, wt, bt, 2, 1)); }, {xt, wt, bt},
                       {"x", "w", "b"});
  CHECK_MESSAGE(rt.max_rel_error < 1e-4, rt.worst);
}

TEST_CASE("composite graph with shared subexpressions") {
  Rng rng(41);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  auto r = grad_check(
      [&](Tape& t) {
        Tensor u = mul(t, a, b);
        Tensor v = add(t, tanh(t, u), sigmoid(t, a));
        return mean(t, mul(t, softplus(t, v), u));
      },
      {a, b});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("forward kernels are deterministic") {
  Rng rng(51);
  Tensor x = random_tensor({1, 3, 10, 10}, rng), w = random_tensor({5, 3, 3, 3}, rng);
  Tape t1, t2;
  CHECK(values(conv2d(t1, x, w, Tensor(), 1, 1)) == values(conv2d(t2, x, w, Tensor(), 1, 1)));
}

TEST_CASE("rng: reproducible, serializable, stream-separated") {
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  a.normal();
  const std::string st = a.state();
  const double n1 = a.normal(), u1 = a.uniform();
  Rng c(0);
  c.set_state(st);
  CHECK(c.normal() == n1);
  CHECK(c.uniform() == u1);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));

  Rng r(99);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.05);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}
