#include "drawcycle/train_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace drawcycle {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (!(lr0 > 0)) fail("lr0 must be positive");
  if (epochs_const > epochs_total) fail("epochs_const must not exceed epochs_total");
  if (lambda_cyc < 0) fail("lambda_cyc must be >= 0");
  if (idt_weight < 0) fail("idt_weight must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) fail("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (d_steps_per_g == 0) fail("d_steps_per_g must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (width == 0 || d_width == 0) fail("widths must be >= 1");
  if (image_size == 0 || image_size % 4 != 0) fail("image_size must be a positive multiple of 4");
  if (DiscriminatorNet::output_extent(image_size) == 0) fail("image_size too small for the discriminator");
  if (!(sparsity.weight_sparsity >= 0 && sparsity.weight_sparsity < 1)) {
    fail("weight_sparsity must lie in [0, 1)");
  }
  if (!(sparsity.k_fraction > 0 && sparsity.k_fraction <= 1)) fail("k_fraction must lie in (0, 1]");
  if (sparsity.boost_strength < 0) fail("boost_strength must be >= 0");
  if (sparsity.duty_period == 0) fail("duty_period must be >= 1");
}

GeneratorConfig TrainConfig::generator_config() const {
  GeneratorConfig g;
  g.width = width;
  g.n_res = n_res;
  g.image_size = image_size;
  g.variant = variant;
  g.sparsity = sparsity;
  return g;
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
  DiscriminatorConfig d;
  d.width = d_width;
  d.activation = d_activation;
  return d;
}

namespace {

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

// Declaration order here is the canonical output order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto real = [&](const char* key, double TrainConfig::*m) {
      t.push_back({key, {[m, key](TrainConfig& c, const std::string& v) { c.*m = parse_double(key, v); },
                         [m](const TrainConfig& c) { return fmt_double(c.*m); }}});
    };
    auto count = [&](const char* key, std::size_t TrainConfig::*m) {
      t.push_back({key, {[m, key](TrainConfig& c, const std::string& v) {
                           c.*m = static_cast<std::size_t>(parse_uint(key, v));
                         },
                         [m](const TrainConfig& c) { return std::to_string(c.*m); }}});
    };
    real("lr0", &TrainConfig::lr0);
    count("epochs_total", &TrainConfig::epochs_total);
    count("epochs_const", &TrainConfig::epochs_const);
    real("lambda_cyc", &TrainConfig::lambda_cyc);
    t.push_back({"idt_enabled",
                 {[](TrainConfig& c, const std::string& v) { c.idt_enabled = parse_bool("idt_enabled", v); },
                  [](const TrainConfig& c) { return std::string(c.idt_enabled ? "true" : "false"); }}});
    real("idt_weight", &TrainConfig::idt_weight);
    t.push_back({"gan_mode",
                 {[](TrainConfig& c, const std::string& v) {
                    if (v == "nonsaturating") c.gan_mode = GanMode::nonsaturating;
                    else if (v == "minimax") c.gan_mode = GanMode::minimax;
                    else throw std::invalid_argument("config: gan_mode must be nonsaturating or minimax");
                  },
                  [](const TrainConfig& c) {
                    return std::string(c.gan_mode == GanMode::nonsaturating ? "nonsaturating" : "minimax");
                  }}});
    t.push_back({"variant",
                 {[](TrainConfig& c, const std::string& v) { c.variant = parse_generator_variant(v); },
                  [](const TrainConfig& c) { return to_string(c.variant); }}});
    count("width", &TrainConfig::width);
    count("n_res", &TrainConfig::n_res);
    count("d_width", &TrainConfig::d_width);
    t.push_back({"d_activation",
                 {[](TrainConfig& c, const std::string& v) {
                    c.d_activation = parse_discriminator_activation(v);
                  },
                  [](const TrainConfig& c) { return to_string(c.d_activation); }}});
    t.push_back({"weight_sparsity",
                 {[](TrainConfig& c, const std::string& v) {
                    c.sparsity.weight_sparsity = parse_double("weight_sparsity", v);
                  },
                  [](const TrainConfig& c) { return fmt_double(c.sparsity.weight_sparsity); }}});
    t.push_back({"k_fraction",
                 {[](TrainConfig& c, const std::string& v) { c.sparsity.k_fraction = parse_double("k_fraction", v); },
                  [](const TrainConfig& c) { return fmt_double(c.sparsity.k_fraction); }}});
    t.push_back({"boost_strength",
                 {[](TrainConfig& c, const std::string& v) {
                    c.sparsity.boost_strength = parse_double("boost_strength", v);
                  },
                  [](const TrainConfig& c) { return fmt_double(c.sparsity.boost_strength); }}});
    t.push_back({"duty_period",
                 {[](TrainConfig& c, const std::string& v) {
                    c.sparsity.duty_period = static_cast<std::size_t>(parse_uint("duty_period", v));
                  },
                  [](const TrainConfig& c) { return std::to_string(c.sparsity.duty_period); }}});
    real("adam_beta1", &TrainConfig::adam_beta1);
    real("adam_beta2", &TrainConfig::adam_beta2);
    real("adam_eps", &TrainConfig::adam_eps);
    count("d_steps_per_g", &TrainConfig::d_steps_per_g);
    count("pool_size", &TrainConfig::pool_size);
    count("batch_size", &TrainConfig::batch_size);
    t.push_back({"seed", {[](TrainConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); },
                          [](const TrainConfig& c) { return std::to_string(c.seed); }}});
    count("image_size", &TrainConfig::image_size);
    count("checkpoint_every", &TrainConfig::checkpoint_every);
    return t;
  }();
  return table;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, const Field*> index;
  for (const auto& [k, f] : fields()) index[k] = &f;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    it->second->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

TrainConfig preset_baseline() {
  TrainConfig c;
  c.idt_enabled = true;
  c.variant = GeneratorVariant::dense_relu;
  c.n_res = 9;
  c.d_activation = DiscriminatorActivation::leaky;
  c.image_size = 256;
  return c;
}

TrainConfig preset_no_idt() {
  TrainConfig c = preset_baseline();
  c.idt_enabled = false;
  return c;
}

TrainConfig preset_finetuned() {
  TrainConfig c;
  c.idt_enabled = false;
  c.variant = GeneratorVariant::sparse_kwinners;
  c.n_res = 12;
  c.d_activation = DiscriminatorActivation::rrelu;
  c.image_size = 256;
  return c;
}

TrainConfig desk_preset(const TrainConfig& full_preset) {
  TrainConfig c = full_preset;
  c.image_size = 64;
  c.width = 16;
  c.d_width = 16;
  c.epochs_total = 20;
  c.epochs_const = 10;
  c.n_res = full_preset.n_res >= 12 ? 3 : 2;
  return c;
}

}  // namespace drawcycle
