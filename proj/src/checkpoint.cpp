#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "drawcycle/training.hpp"

// Layout, all integers and reals little-endian:
//   "DRAWCKPT" u32 version
//   str config_text, u64 epochs_done, u64 global_step
//   u64 n_tensors, then per tensor: str name, u32 ndim, u64 dims[ndim], f64 values[]
//   u64 n_strings, then per entry: str key, str value
// where str is u64 length followed by raw bytes.

namespace drawcycle {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'A', 'W', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;


template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  void u32(std::uint32_t v) { raw(to_le(v)); }
  void u64(std::uint64_t v) { raw(to_le(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.append(s);
  }
  const std::string& bytes() const { return buf_; }

 private:
  template <typename T>
  void raw(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : buf_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint32_t u32() { return to_le(raw<std::uint32_t>()); }
  std::uint64_t u64() { return to_le(raw<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_bytes(const char* data, std::size_t n) {
    need(n);
    if (std::memcmp(buf_.data() + pos_, data, n) != 0) fail("not a checkpoint file (bad magic)");
    pos_ += n;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint " + origin_ + ": " + what);
  }

 private:
  void need(std::uint64_t n) {
    if (n > buf_.size() - pos_) fail("truncated at byte " + std::to_string(pos_));
  }
  template <typename T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

struct CheckpointData {
  std::string config_text;
  std::uint64_t epochs_done = 0;
  std::uint64_t global_step = 0;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> strings;
};

CheckpointData read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint " + path.string() + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  r.expect_bytes(kMagic, sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  CheckpointData d;
  d.config_text = r.str();
  d.epochs_done = r.u64();
  d.global_step = r.u64();
  const std::uint64_t n_tensors = r.u64();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) r.fail("tensor " + name + " has implausible rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& e : shape) e = r.u64();
    const std::size_t n = shape_numel(shape);
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    if (!d.tensors.emplace(name, Tensor(shape, std::move(values))).second) {
      r.fail("duplicate tensor " + name);
    }
  }
  const std::uint64_t n_strings = r.u64();
  for (std::uint64_t i = 0; i < n_strings; ++i) {
    std::string key = r.str();
    d.strings[key] = r.str();
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return d;
}

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.dim()));
  for (std::size_t e : t.shape()) w.u64(e);
  for (double v : t.data()) w.f64(v);
}

const Tensor& find_matching(const CheckpointData& d, const std::string& name, const Tensor& target,
                            const std::filesystem::path& path) {
  const auto it = d.tensors.find(name);
  if (it == d.tensors.end()) {
    throw std::runtime_error("checkpoint " + path.string() + ": missing tensor " + name);
  }
  if (it->second.shape() != target.shape()) {
    throw std::runtime_error("checkpoint " + path.string() + ": shape mismatch for " + name +
                             ": checkpoint " + shape_str(it->second.shape()) + " vs config " +
                             shape_str(target.shape()));
  }
  return it->second;
}

const std::string& require_string(const CheckpointData& d, const std::string& key,
                                  const std::filesystem::path& path) {
  const auto it = d.strings.find(key);
  if (it == d.strings.end()) throw std::runtime_error("checkpoint " + path.string() + ": missing " + key);
  return it->second;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Writer w;
  std::string header(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.str(to_config_text(cfg_));
  w.u64(epochs_done_);
  w.u64(global_step_);

  const StateList state = full_state();
  const std::size_t n_pool = pool_x_.size() + pool_y_.size();
  w.u64(state.size() + n_pool);
  for (const auto& e : state) write_tensor(w, e.name, e.tensor);
  for (std::size_t i = 0; i < pool_x_.size(); ++i) write_tensor(w, "pool_x." + std::to_string(i), pool_x_.images()[i]);
  for (std::size_t i = 0; i < pool_y_.size(); ++i) write_tensor(w, "pool_y." + std::to_string(i), pool_y_.images()[i]);

  std::vector<std::pair<std::string, std::string>> strings = {
      {"adam_g.t", std::to_string(adam_g_.t)},
      {"adam_d_x.t", std::to_string(adam_dx_.t)},
      {"adam_d_y.t", std::to_string(adam_dy_.t)},
      {"pool_x.size", std::to_string(pool_x_.size())},
      {"pool_y.size", std::to_string(pool_y_.size())},
      {"pool_x.rng", pool_x_.rng().state()},
      {"pool_y.rng", pool_y_.rng().state()},
      {"shuffle_x.rng", shuffle_x_.state()},
      {"shuffle_y.rng", shuffle_y_.state()},
  };
  auto& self = const_cast<Trainer&>(*this);
  const auto dx_rngs = self.nets_.d_x.rngs();
  const auto dy_rngs = self.nets_.d_y.rngs();
  for (std::size_t i = 0; i < dx_rngs.size(); ++i) strings.push_back({"d_x.rng." + std::to_string(i), dx_rngs[i]->state()});
  for (std::size_t i = 0; i < dy_rngs.size(); ++i) strings.push_back({"d_y.rng." + std::to_string(i), dy_rngs[i]->state()});
  w.u64(strings.size());
  for (const auto& [k, v] : strings) {
    w.str(k);
    w.str(v);
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint " + path.string() + ": cannot write");
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("checkpoint " + path.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const CheckpointData d = read_file(path);
  StateList state = full_state();
  // Validate every tensor before touching any state.
  std::vector<const Tensor*> sources;
  for (const auto& e : state) sources.push_back(&find_matching(d, e.name, e.tensor, path));
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto src = sources[i]->data();
    std::copy(src.begin(), src.end(), state[i].tensor.data().begin());
  }

  auto parse_u64 = [&](const std::string& key) -> std::uint64_t {
    const std::string& v = require_string(d, key, path);
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
      throw std::runtime_error("checkpoint " + path.string() + ": bad value for " + key);
    }
  };
  auto restore_pool = [&](ImagePool& pool, const std::string& prefix) {
    const std::size_t n = parse_u64(prefix + ".size");
    if (n > pool.capacity()) {
      throw std::runtime_error("checkpoint " + path.string() + ": " + prefix + " holds " +
                               std::to_string(n) + " images, capacity " + std::to_string(pool.capacity()));
    }
    pool.images().clear();
    for (std::size_t i = 0; i < n; ++i) {
      const std::string name = prefix + "." + std::to_string(i);
      const auto it = d.tensors.find(name);
      if (it == d.tensors.end()) throw std::runtime_error("checkpoint " + path.string() + ": missing " + name);
      pool.images().push_back(it->second.clone());
    }
    pool.rng().set_state(require_string(d, prefix + ".rng", path));
  };
  restore_pool(pool_x_, "pool_x");
  restore_pool(pool_y_, "pool_y");
  adam_g_.t = parse_u64("adam_g.t");
  adam_dx_.t = parse_u64("adam_d_x.t");
  adam_dy_.t = parse_u64("adam_d_y.t");
  shuffle_x_.set_state(require_string(d, "shuffle_x.rng", path));
  shuffle_y_.set_state(require_string(d, "shuffle_y.rng", path));
  const auto dx_rngs = nets_.d_x.rngs();
  const auto dy_rngs = nets_.d_y.rngs();
  for (std::size_t i = 0; i < dx_rngs.size(); ++i) dx_rngs[i]->set_state(require_string(d, "d_x.rng." + std::to_string(i), path));
  for (std::size_t i = 0; i < dy_rngs.size(); ++i) dy_rngs[i]->set_state(require_string(d, "d_y.rng." + std::to_string(i), path));
  if (d.epochs_done > cfg_.epochs_total) {
    throw std::runtime_error("checkpoint " + path.string() + ": epoch " + std::to_string(d.epochs_done) +
                             " exceeds epochs_total " + std::to_string(cfg_.epochs_total));
  }
  epochs_done_ = d.epochs_done;
  global_step_ = d.global_step;
}

TrainConfig read_checkpoint_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path).config_text);
}

}  // namespace drawcycle
