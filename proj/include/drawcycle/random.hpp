#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace drawcycle {

/// Seeded 64-bit generator with portable derived distributions.
///
/// The standard library's distribution objects are implementation-defined,
/// so uniform and Gaussian draws are derived here directly from the engine
/// output. The full engine state round-trips through state()/set_state().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; both variates of a pair are used.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace drawcycle
