#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "distill/core/tape.hpp"

namespace distill::losses {

using core::Matrix;
using core::Var;

/// Weights of the three distillation terms in the joint objective.
struct LossWeights {
  double atomic = 300.0;
  double global = 100.0;
  double boundary = 5.0;

  void validate() const;
  bool all_zero() const { return atomic == 0.0 && global == 0.0 && boundary == 0.0; }
};

struct AtomicConfig {
  double phi = 1.0;          // negatives-to-corpus-snippets ratio
  double temperature = 1.0;  // divides the snippet inner product
  bool normalize = true;     // L2-normalize snippet vectors first

  void validate() const;
};

/// phi = N / M, M being the snippet count of the whole training corpus.
double corpus_phi(int negatives_per_positive, std::size_t corpus_snippets);

/// Index pairs (student list index, teacher list index).
struct SnippetPairing {
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::vector<std::pair<std::size_t, std::size_t>> negatives;
};

/// Contrastive snippet loss, minimized form:
///   (1/P) sum_pos mean_t -log h  +  (1/|neg|) sum_neg mean_t -log(1 - h),
///   h = e^{<t,s>/tau} / (e^{<t,s>/tau} + phi).
/// For a negative pair the student snippet t meets teacher snippet t mod T_j.
/// Teacher features never receive gradient.
Var atomic_loss(std::span<const Var> student, std::span<const Var> teacher, const SnippetPairing& pairing,
                const AtomicConfig& cfg);

/// (1/(T-1)) sum_t (F_t - mu)(F_t - mu)^T, C x C.
Var channel_covariance(const Var& features);

/// Upper triangle (diagonal included) of a symmetric matrix, row-major.
Var cov_mask(const Var& cov, double symmetry_tolerance = 1e-9);

/// Inverse of cov_mask on values.
Matrix cov_unmask(const Matrix& embedding, Eigen::Index channels);

enum class GlobalMode { kMean, kSum };

/// Mean over pairs of the (mean or summed) squared difference between
/// teacher and student covariance embeddings. Lists are the aligned
/// positive pairs.
Var global_loss(std::span<const Var> student, std::span<const Var> teacher, GlobalMode mode = GlobalMode::kMean);

enum class VariationMode { kPerStep, kScalar };

struct VariationSignal {
  VariationMode mode;
  Var values;  // (T-1) x 1 per step, 1 x 1 scalar
};

/// v(t) = sum_c [F(t+1, c) - F(t, c)], or its mean over t in scalar mode.
VariationSignal variation_signal(const Var& features, VariationMode mode);

/// Mean absolute difference between two signals of the same mode.
Var boundary_distance(const VariationSignal& teacher, const VariationSignal& student);

Var boundary_loss(std::span<const Var> student, std::span<const Var> teacher,
                  VariationMode mode = VariationMode::kPerStep);

/// Mean binary cross-entropy with logits over all T x K cells; labels must be 0/1.
Var classification_loss(const Var& logits, const Matrix& labels);

Var total_loss(const Var& cls, const Var& atomic, const Var& global, const Var& boundary, const LossWeights& w);
double total_loss(double cls, double atomic, double global, double boundary, const LossWeights& w);

}  // namespace distill::losses
