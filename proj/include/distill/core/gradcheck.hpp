#pragma once

#include <algorithm>
#include <cmath>

#include "distill/core/tape.hpp"

namespace distill::core {

/// Compares the reverse-mode gradient of a scalar function against central
/// differences.
///
/// `fn(tape, x)` must build a 1x1 node from the leaf `x`. Returns
///   max_i |analytic_i - (f(x + h e_i) - f(x - h e_i)) / 2h| / max(1, |analytic_i|).
template <typename Scalar, typename Fn>
Scalar finite_diff_check(Fn&& fn, const Tensor<Scalar>& x, Scalar h) {
  if (!(h > Scalar(0))) throw StructuralError("finite_diff_check: step must be positive");

  Tensor<Scalar> analytic;
  {
    BasicTape<Scalar> tape;
    BasicVar<Scalar> leaf = tape.leaf(x, true);
    BasicVar<Scalar> root = fn(tape, leaf);
    tape.backward(root);
    analytic = tape.grad(leaf);
  }

  auto evaluate = [&fn](const Tensor<Scalar>& point) {
    BasicTape<Scalar> tape;
    const Scalar value = fn(tape, tape.constant(point)).item();
    if (!std::isfinite(value)) throw NumericalError("finite_diff_check: non-finite function value");
    return value;
  };

  Scalar worst = 0;
  Tensor<Scalar> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar original = probe.data()[i];
    probe.data()[i] = original + h;
    const Scalar up = evaluate(probe);
    probe.data()[i] = original - h;
    const Scalar down = evaluate(probe);
    probe.data()[i] = original;

    const Scalar numeric = (up - down) / (Scalar(2) * h);
    const Scalar a = analytic.data()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(Scalar(1), std::abs(a)));
  }
  return worst;
}

}  // namespace distill::core
