#pragma once

#include <optional>

#include "drawcycle/tensor.hpp"

namespace drawcycle {

/// How the generator's adversarial term is formed from D's logits on fakes.
enum class GanMode {
  /// -log D(G(x)) = softplus(-logit). Non-negative, does not saturate early.
  nonsaturating,
  /// log(1 - D(G(x))) = -softplus(logit), the literal minimax term.
  minimax,
};

/// Realized loss values of one training step.
struct LossBundle {
  double gan_g_xy = 0;  // adversarial term of G_xy against D_Y
  double gan_g_yx = 0;  // adversarial term of G_yx against D_X
  double gan_d_x = 0;   // halved discriminator loss of D_X
  double gan_d_y = 0;   // halved discriminator loss of D_Y
  double cyc = 0;
  std::optional<double> idt;
  double total_g = 0;
  double lambda_cyc = 10.0;
};

Tensor gan_loss_generator(Tape& tape, const Tensor& fake_logits,
                          GanMode mode = GanMode::nonsaturating);

/// 0.5 * [mean softplus(-real) + mean softplus(fake)]. The halving slows the
/// discriminator relative to the generators.
Tensor gan_loss_discriminator(Tape& tape, const Tensor& real_logits, const Tensor& fake_logits);

/// mean|x_cycled - x| + mean|y_cycled - y|.
Tensor cycle_consistency_loss(Tape& tape, const Tensor& x, const Tensor& x_cycled,
                              const Tensor& y, const Tensor& y_cycled);

/// mean|G_xy(y) - y| + mean|G_yx(x) - x|.
Tensor identity_loss(Tape& tape, const Tensor& y, const Tensor& g_xy_of_y, const Tensor& x,
                     const Tensor& g_yx_of_x);

/// gan_xy + gan_yx + lambda * cyc (+ idt_weight * idt when `idt` is defined).
/// Passing an undefined `idt` gives the objective without identity loss.
Tensor total_objective(Tape& tape, const Tensor& gan_xy, const Tensor& gan_yx, const Tensor& cyc,
                       const Tensor& idt, double lambda_cyc, double idt_weight = 1.0);

}  // namespace drawcycle
