#include "distill/train/optim.hpp"

#include <cmath>
#include <string>

namespace distill::train {

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size()) throw StructuralError("adam_step: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw StructuralError("adam_step: gradient " + std::to_string(i) + " shape mismatch");
    }
    if (!grads[i].allFinite()) throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(i));
  }
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw StructuralError("adam_step: state does not match parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    params[i]->array() -= state.learning_rate * (m.array() / correction1) /
                          ((v.array() / correction2).sqrt() + state.epsilon);
  }
}

PlateauScheduler::PlateauScheduler(double factor, int patience, double threshold)
    : factor_(factor), patience_(patience), threshold_(threshold) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (patience < 1) throw ConfigError("plateau patience must be >= 1");
}

bool PlateauScheduler::observe(double value) {
  if (value < best_ - threshold_) {
    best_ = value;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ >= patience_) {
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

double lr_plateau_update(std::span<const double> history, double learning_rate, double factor, int patience,
                         double threshold) {
  PlateauScheduler scheduler(factor, patience, threshold);
  bool reduced = false;
  for (double v : history) reduced = scheduler.observe(v);
  return reduced ? learning_rate * factor : learning_rate;
}

}  // namespace distill::train
