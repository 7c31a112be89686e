#include "drawcycle/objectives.hpp"

#include <stdexcept>

#include "drawcycle/ops.hpp"

namespace drawcycle {

namespace {

Tensor mean_abs_diff(Tape& tape, const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " differ");
  }
  return mean(tape, abs(tape, sub(tape, a, b)));
}

}  // namespace

Tensor gan_loss_generator(Tape& tape, const Tensor& fake_logits, GanMode mode) {
  if (mode == GanMode::nonsaturating) return mean(tape, softplus(tape, neg(tape, fake_logits)));
  return neg(tape, mean(tape, softplus(tape, fake_logits)));
}

Tensor gan_loss_discriminator(Tape& tape, const Tensor& real_logits, const Tensor& fake_logits) {
  const Tensor real_term = mean(tape, softplus(tape, neg(tape, real_logits)));
  const Tensor fake_term = mean(tape, softplus(tape, fake_logits));
  return scale(tape, add(tape, real_term, fake_term), 0.5);
}

Tensor cycle_consistency_loss(Tape& tape, const Tensor& x, const Tensor& x_cycled, const Tensor& y,
                              const Tensor& y_cycled) {
  return add(tape, mean_abs_diff(tape, x_cycled, x, "cycle loss"),
             mean_abs_diff(tape, y_cycled, y, "cycle loss"));
}

Tensor identity_loss(Tape& tape, const Tensor& y, const Tensor& g_xy_of_y, const Tensor& x,
                     const Tensor& g_yx_of_x) {
  return add(tape, mean_abs_diff(tape, g_xy_of_y, y, "identity loss"),
             mean_abs_diff(tape, g_yx_of_x, x, "identity loss"));
}

Tensor total_objective(Tape& tape, const Tensor& gan_xy, const Tensor& gan_yx, const Tensor& cyc,
                       const Tensor& idt, double lambda_cyc, double idt_weight) {
  if (lambda_cyc < 0) throw std::invalid_argument("total objective: lambda must be >= 0");
  if (idt_weight < 0) throw std::invalid_argument("total objective: identity weight must be >= 0");
  Tensor total = add(tape, add(tape, gan_xy, gan_yx), scale(tape, cyc, lambda_cyc));
  if (idt.defined()) total = add(tape, total, scale(tape, idt, idt_weight));
  return total;
}

}  // namespace drawcycle
