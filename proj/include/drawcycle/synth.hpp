#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "drawcycle/image.hpp"

namespace drawcycle {

struct CountRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

struct SynthConfig {
  std::size_t image_size = 64;
  std::size_t n_train = 40;  // per domain
  std::size_t n_test = 10;   // per domain, also the number of eval pairs
  std::uint64_t seed = 1;
  CountRange rectangles{1, 2};
  CountRange polylines{1, 2};
  CountRange circles{0, 1};
  CountRange hatches{1, 1};
  CountRange dimensions{1, 2};
  CountRange weld_symbols{1, 1};
  AugmentOps augment_ops{true, 2};
  bool augment = true;

  void validate() const;
};

/// One drawing rendered in both domains from the same geometry.
struct RenderedDrawing {
  GrayImage outline;      // domain X: bare part outline
  GrayImage annotated;    // domain Y: outline plus annotations
  GrayImage annotation;   // 255 where an annotation stroke was drawn
};

/// Renders the drawing for one geometry seed.
RenderedDrawing render_drawing(const SynthConfig& cfg, std::uint64_t geometry_seed);

struct EvalPair {
  GrayImage x;
  GrayImage y;
};

/// Unpaired two-domain corpus. domain_x and domain_y come from independent
/// geometry; paired_eval shares geometry across domains and is reserved for
/// metric evaluation.
struct Dataset {
  std::vector<GrayImage> domain_x;
  std::vector<GrayImage> domain_y;
  std::vector<EvalPair> paired_eval;
};

/// n_train + n_test images per domain plus n_test eval pairs.
Dataset synth_generate(const SynthConfig& cfg);

struct Splits {
  std::vector<std::size_t> train_x, test_x;
  std::vector<std::size_t> train_y, test_y;
};

/// Seeded disjoint train/test index split of each domain.
Splits make_splits(const Dataset& dataset, std::size_t n_train, std::size_t n_test,
                   std::uint64_t seed);

/// On-disk corpus: trainX/, trainY/, testX/, testY/ and eval_pairs/{x,y}/,
/// each holding NNNN.pgm files.
struct Corpus {
  std::vector<GrayImage> train_x, train_y, test_x, test_y;
  std::vector<EvalPair> eval_pairs;
};

Corpus assemble_corpus(const Dataset& dataset, const Splits& splits);
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// Sorted *.pgm paths of a directory.
std::vector<std::filesystem::path> list_pgm(const std::filesystem::path& dir);
std::string numbered_name(std::size_t index);

}  // namespace drawcycle
