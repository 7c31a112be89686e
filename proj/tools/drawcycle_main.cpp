#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "drawcycle/commands.hpp"

using namespace drawcycle;

int main(int argc, char** argv) {
  CLI::App app{"drawcycle: unpaired translation of engineering drawings"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic two-domain corpus");
  c_synth->add_option("--out", synth.out, "corpus directory")->required();
  c_synth->add_option("--size", synth.size, "image side length (multiple of 4)");
  c_synth->add_option("--train", synth.train, "training images per domain");
  c_synth->add_option("--test", synth.test, "test images per domain and eval pairs");
  c_synth->add_option("--seed", synth.seed, "corpus seed");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "train a CycleGAN pair on a corpus");
  c_train->add_option("--data", train.data, "corpus directory")->required();
  c_train->add_option("--config", train.config, "key = value config file")->required();
  c_train->add_option("--out", train.out, "run directory")->required();
  c_train->add_option("--resume", train.resume, "checkpoint to continue from");

  TranslateOptions translate;
  std::string direction = "x2y";
  auto* c_translate = app.add_subcommand("translate", "run a trained generator over a directory");
  c_translate->add_option("--ckpt", translate.ckpt, "checkpoint file")->required();
  c_translate->add_option("--in", translate.in, "input PGM directory")->required();
  c_translate->add_option("--out", translate.out, "output directory")->required();
  c_translate->add_option("--direction", direction, "x2y or y2x")->check(CLI::IsMember({"x2y", "y2x"}));
  c_translate->add_option("--config", translate.config, "require the checkpoint to match this config");

  EvaluateOptions evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "MSE / PSNR / SSIM of translated vs reference images");
  c_eval->add_option("--translated", evaluate.translated, "translated PGM directory")->required();
  c_eval->add_option("--reference", evaluate.reference, "reference PGM directory")->required();
  c_eval->add_option("--out", evaluate.out, "report CSV");

  CurvesOptions curves;
  auto* c_curves = app.add_subcommand("curves", "SVG loss curves from losses.csv");
  c_curves->add_option("--losses", curves.losses, "losses.csv")->required();
  c_curves->add_option("--out", curves.out, "output SVG")->required();
  c_curves->add_option("--columns", curves.columns, "columns to plot")->delimiter(',');

  RobustnessOptions robust;
  auto* c_robust = app.add_subcommand("robustness", "output deviation under input noise, sparse vs dense");
  c_robust->add_option("--sparse", robust.sparse_ckpt, "checkpoint of the sparse run")->required();
  c_robust->add_option("--dense", robust.dense_ckpt, "checkpoint of the dense run")->required();
  c_robust->add_option("--images", robust.images, "domain-X PGM directory")->required();
  c_robust->add_option("--sigma", robust.sigma, "noise standard deviation on the [-1, 1] scale");
  c_robust->add_option("--seed", robust.seed, "noise seed");
  c_robust->add_option("--out", robust.out, "report CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_synth) cmd_synth(synth, std::cout);
    if (*c_train) cmd_train(train, std::cout);
    if (*c_translate) {
      translate.direction = parse_direction(direction);
      cmd_translate(translate, std::cout);
    }
    if (*c_eval) cmd_evaluate(evaluate, std::cout);
    if (*c_curves) cmd_curves(curves, std::cout);
    if (*c_robust) cmd_robustness(robust, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
