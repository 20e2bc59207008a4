#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "distill/core/tape.hpp"

namespace distill::train {

using core::Matrix;

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;   // lazily sized on the first step
  std::vector<Matrix> second_moment;
};

/// Bias-corrected Adam update, in place. A non-finite gradient aborts the
/// whole step (NumericalError) before anything is modified.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state);

/// Reduce-on-plateau (min mode, absolute threshold): after `patience`
/// consecutive epochs without improving the best value by more than
/// `threshold`, the rate is multiplied by `factor` and the counter resets.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience, double threshold = 1e-6);

  /// Feeds one validation loss; returns true when it triggers a reduction.
  bool observe(double value);
  double apply(double value, double learning_rate) { return observe(value) ? learning_rate * factor_ : learning_rate; }

  double best() const { return best_; }
  int bad_epochs() const { return bad_epochs_; }

 private:
  double factor_;
  int patience_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

/// Replays `history` through a fresh scheduler and returns the rate to use
/// after its last entry.
double lr_plateau_update(std::span<const double> history, double learning_rate, double factor, int patience,
                         double threshold = 1e-6);

}  // namespace distill::train
