#include "drawcycle/models.hpp"

#include <stdexcept>

namespace drawcycle {

std::string to_string(GeneratorVariant v) {
  return v == GeneratorVariant::dense_relu ? "dense_relu" : "sparse_kwinners";
}

GeneratorVariant parse_generator_variant(const std::string& text) {
  if (text == "dense_relu") return GeneratorVariant::dense_relu;
  if (text == "sparse_kwinners") return GeneratorVariant::sparse_kwinners;
  throw std::invalid_argument("unknown generator variant '" + text + "'");
}

std::string to_string(DiscriminatorActivation a) {
  return a == DiscriminatorActivation::rrelu ? "rrelu" : "leaky";
}

DiscriminatorActivation parse_discriminator_activation(const std::string& text) {
  if (text == "rrelu") return DiscriminatorActivation::rrelu;
  if (text == "leaky") return DiscriminatorActivation::leaky;
  throw std::invalid_argument("unknown discriminator activation '" + text + "'");
}

void GeneratorConfig::validate() const {
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("generator: channel counts must be positive");
  }
  if (width == 0) throw std::invalid_argument("generator: width must be >= 1");
  if (variant == GeneratorVariant::sparse_kwinners) {
    if (image_size == 0 || image_size % 4 != 0) {
      throw std::invalid_argument("generator: image size must be a positive multiple of 4");
    }
    if (!(sparsity.weight_sparsity >= 0 && sparsity.weight_sparsity < 1)) {
      throw std::invalid_argument("generator: weight sparsity must lie in [0, 1)");
    }
  }
}

void DiscriminatorConfig::validate() const {
  if (in_channels == 0 || width == 0) {
    throw std::invalid_argument("discriminator: width and channels must be positive");
  }
  rrelu.validate();
}

namespace {

// Mask streams and the weight-init stream are derived from the build seed.
constexpr std::uint64_t kInitStream = 1000;
constexpr std::uint64_t kRReLUStream = 2000;

KWinners make_kwinners(const SparsityConfig& s, std::size_t units) {
  KWinnersConfig k;
  k.units = units;
  k.k = winners_for_fraction(units, s.k_fraction);
  k.boost_strength = s.boost_strength;
  k.duty_period = s.duty_period;
  return KWinners(k);
}

}  // namespace

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const bool sparse = cfg_.variant == GeneratorVariant::sparse_kwinners;
  const std::size_t w = cfg_.width;
  std::uint64_t mask_stream = 0;

  auto conv = [&](std::size_t in, std::size_t out, std::size_t k, std::size_t s,
                  std::size_t p) -> AnyConv {
    if (sparse) {
      return SparseConv2d(in, out, k, s, p, cfg_.sparsity.weight_sparsity,
                          derive_seed(seed, mask_stream++));
    }
    return Conv2d(in, out, k, s, p);
  };
  auto act = [&](std::size_t channels, std::size_t extent) -> Activation {
    if (sparse) return make_kwinners(cfg_.sparsity, channels * extent * extent);
    return Relu{};
  };

  const std::size_t s0 = cfg_.image_size;
  encoder_.push_back({3, conv(cfg_.in_channels, w, 7, 1, 0), InstanceNorm2d(w), act(w, s0)});
  encoder_.push_back({0, conv(w, 2 * w, 3, 2, 1), InstanceNorm2d(2 * w), act(2 * w, s0 / 2)});
  encoder_.push_back({0, conv(2 * w, 4 * w, 3, 2, 1), InstanceNorm2d(4 * w), act(4 * w, s0 / 4)});
  for (std::size_t i = 0; i < cfg_.n_res; ++i) {
    AnyConv a = conv(4 * w, 4 * w, 3, 1, 0);
    AnyConv b = conv(4 * w, 4 * w, 3, 1, 0);
    blocks_.emplace_back(std::move(a), std::move(b), 4 * w, act(4 * w, s0 / 4));
  }
  decoder_.push_back({ConvTranspose2d(4 * w, 2 * w, 4, 2, 1), InstanceNorm2d(2 * w)});
  decoder_.push_back({ConvTranspose2d(2 * w, w, 4, 2, 1), InstanceNorm2d(w)});
  head_.emplace(w, cfg_.out_channels, 7, 1, 0);
  init_weights(seed);
}

void GeneratorNet::init_weights(std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInitStream));
  for (auto& st : encoder_) {
    init_conv(st.conv, rng, kInitStddev);
    if (st.norm) st.norm->reset();
  }
  for (auto& b : blocks_) b.init(rng, kInitStddev);
  for (auto& u : decoder_) {
    u.conv.init_normal(rng, kInitStddev);
    u.norm.reset();
  }
  head_->init_normal(rng, kInitStddev);
}

Tensor GeneratorNet::forward(Tape& tape, const Tensor& x) {
  if (x.dim() != 4 || x.extent(1) != cfg_.in_channels) {
    throw std::invalid_argument("generator: expected (B, " + std::to_string(cfg_.in_channels) +
                                ", H, W) input, got " + shape_str(x.shape()));
  }
  const std::size_t h = x.extent(2), w = x.extent(3);
  if (h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8) {
    throw std::invalid_argument("generator: spatial extents must be multiples of 4 and >= 8, got " +
                                shape_str(x.shape()));
  }
  if (cfg_.variant == GeneratorVariant::sparse_kwinners &&
      (h != cfg_.image_size || w != cfg_.image_size)) {
    throw std::invalid_argument("generator: sparse variant is sized for " +
                                std::to_string(cfg_.image_size) + "x" +
                                std::to_string(cfg_.image_size) + " input");
  }
  Tensor t = x;
  for (auto& st : encoder_) {
    if (st.reflect) t = reflect_pad(tape, t, st.reflect);
    t = apply_conv(tape, st.conv, t);
    if (st.norm) t = st.norm->forward(tape, t);
    t = apply_activation(tape, st.act, t);
  }
  for (auto& b : blocks_) t = b.forward(tape, t);
  for (auto& u : decoder_) t = relu(tape, u.norm.forward(tape, u.conv.forward(tape, t)));
  t = head_->forward(tape, reflect_pad(tape, t, 3));
  return drawcycle::tanh(tape, t);
}

void GeneratorNet::set_training(bool flag) {
  training_ = flag;
  for (auto& st : encoder_) drawcycle::set_training(st.act, flag);
  for (auto& b : blocks_) b.set_training(flag);
}

StateList GeneratorNet::state() const {
  StateList out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i) + ".";
    collect_conv(encoder_[i].conv, out, p + "conv.");
    if (encoder_[i].norm) encoder_[i].norm->collect(out, p + "norm.");
    collect_activation(encoder_[i].act, out, p + "act.");
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect(out, "res" + std::to_string(i) + ".");
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "dec" + std::to_string(i) + ".";
    decoder_[i].conv.collect(out, p + "conv.");
    decoder_[i].norm.collect(out, p + "norm.");
  }
  head_->collect(out, "head.");
  return out;
}

std::vector<const KWinners*> GeneratorNet::kwinners_layers() const {
  std::vector<const KWinners*> out;
  for (const auto& st : encoder_) {
    if (const auto* k = std::get_if<KWinners>(&st.act)) out.push_back(k);
  }
  for (const auto& b : blocks_) {
    if (const auto* k = std::get_if<KWinners>(&b.act)) out.push_back(k);
  }
  return out;
}

std::vector<const SparseConv2d*> GeneratorNet::sparse_convs() const {
  std::vector<const SparseConv2d*> out;
  for (const auto& st : encoder_) {
    if (const auto* s = std::get_if<SparseConv2d>(&st.conv)) out.push_back(s);
  }
  for (const auto& b : blocks_) {
    for (const AnyConv* c : {&b.conv_a, &b.conv_b}) {
      if (const auto* s = std::get_if<SparseConv2d>(c)) out.push_back(s);
    }
  }
  return out;
}

std::pair<std::size_t, std::size_t> encoder_mid_weight_counts(const GeneratorNet& net) {
  std::size_t nonzero = 0, total = 0;
  for (const auto& e : net.state()) {
    if (!e.trainable || e.name.size() < 7) continue;
    const bool enc_or_mid = e.name.rfind("enc", 0) == 0 || e.name.rfind("res", 0) == 0;
    if (!enc_or_mid || e.name.find(".weight") == std::string::npos) continue;
    for (double v : e.tensor.data()) {
      ++total;
      if (v != 0.0) ++nonzero;
    }
  }
  return {nonzero, total};
}

DiscriminatorNet::DiscriminatorNet(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t w = cfg_.width;
  const std::size_t chans[] = {cfg_.in_channels, w, 2 * w, 4 * w, 8 * w, 1};
  const std::size_t strides[] = {2, 2, 2, 1, 1};
  for (std::size_t i = 0; i < 5; ++i) {
    convs_.emplace_back(chans[i], chans[i + 1], 4, strides[i], 1);
    if (cfg_.instance_norm && i >= 1 && i <= 3) {
      norms_.emplace_back(InstanceNorm2d(chans[i + 1]));
    } else {
      norms_.emplace_back(std::nullopt);
    }
    if (i < 4) {
      if (cfg_.activation == DiscriminatorActivation::rrelu) {
        acts_.emplace_back(RReLU(cfg_.rrelu, derive_seed(seed, kRReLUStream + i)));
      } else {
        acts_.emplace_back(LeakyRelu{cfg_.leaky_slope});
      }
    }
  }
  init_weights(seed);
}

void DiscriminatorNet::init_weights(std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInitStream));
  for (auto& c : convs_) c.init_normal(rng, kInitStddev);
  for (auto& n : norms_) {
    if (n) n->reset();
  }
}

std::size_t DiscriminatorNet::output_extent(std::size_t input) {
  std::size_t e = input;
  const std::size_t strides[] = {2, 2, 2, 1, 1};
  for (auto s : strides) {
    if (e + 2 < 4) return 0;
    e = (e + 2 - 4) / s + 1;
  }
  return e;
}

Tensor DiscriminatorNet::forward(Tape& tape, const Tensor& x) {
  if (x.dim() != 4 || x.extent(1) != cfg_.in_channels) {
    throw std::invalid_argument("discriminator: expected (B, " + std::to_string(cfg_.in_channels) +
                                ", H, W) input, got " + shape_str(x.shape()));
  }
  // A nonempty output also leaves >= 2x2 positions on every normed layer.
  const std::size_t h = x.extent(2), w = x.extent(3);
  if (output_extent(h) == 0 || output_extent(w) == 0) {
    throw std::invalid_argument("discriminator: input " + shape_str(x.shape()) +
                                " is too small for the patch layout");
  }
  Tensor t = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    t = convs_[i].forward(tape, t);
    if (norms_[i]) t = norms_[i]->forward(tape, t);
    if (i < acts_.size()) t = apply_activation(tape, acts_[i], t);
  }
  return t;
}

void DiscriminatorNet::set_training(bool flag) {
  for (auto& a : acts_) drawcycle::set_training(a, flag);
}

std::vector<Rng*> DiscriminatorNet::rngs() {
  std::vector<Rng*> out;
  for (auto& a : acts_) {
    if (auto* r = std::get_if<RReLU>(&a)) out.push_back(&r->rng);
  }
  return out;
}

StateList DiscriminatorNet::state() const {
  StateList out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    convs_[i].collect(out, p + "conv.");
    if (norms_[i]) norms_[i]->collect(out, p + "norm.");
  }
  return out;
}

GeneratorNet build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  return GeneratorNet(cfg, seed);
}

DiscriminatorNet build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  return DiscriminatorNet(cfg, seed);
}

}  // namespace drawcycle
