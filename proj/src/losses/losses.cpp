#include "distill/losses/losses.hpp"

#include <cmath>
#include <string>

#include "distill/core/ops.hpp"

namespace distill::losses {

using core::Tape;

void LossWeights::validate() const {
  for (double a : {atomic, global, boundary}) {
    if (!std::isfinite(a) || a < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
}

void AtomicConfig::validate() const {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw ConfigError("atomic phi must be a positive finite number");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("atomic temperature must be positive");
}

double corpus_phi(int negatives_per_positive, std::size_t corpus_snippets) {
  if (negatives_per_positive < 1 || corpus_snippets == 0) {
    throw ConfigError("phi needs at least one negative and a non-empty corpus");
  }
  return static_cast<double>(negatives_per_positive) / static_cast<double>(corpus_snippets);
}

namespace {

Matrix normalized_rows(const Matrix& x) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = x.row(r).norm();
    if (n > 1e-12) out.row(r) = x.row(r) / n;
  }
  return out;
}

// Teacher rows realigned to the student's length: row t <- row (t mod Tj).
Matrix aligned_teacher(const Matrix& teacher, Eigen::Index steps) {
  if (teacher.rows() == steps) return teacher;
  Matrix out(steps, teacher.cols());
  for (Eigen::Index t = 0; t < steps; ++t) out.row(t) = teacher.row(t % teacher.rows());
  return out;
}

// z = <t, s>/tau - log(phi), one entry per student snippet.
Var pair_logits(const Var& student, const Var& teacher, const AtomicConfig& cfg) {
  Tape& tape = *student.tape();
  if (teacher.cols() != student.cols()) {
    throw StructuralError("atomic_loss: teacher has " + std::to_string(teacher.cols()) + " channels, student " +
                          std::to_string(student.cols()));
  }
  if (teacher.rows() == 0) throw DegenerateInputError("atomic_loss: empty teacher sequence");
  Matrix t = aligned_teacher(teacher.value(), student.rows());
  if (cfg.normalize) t = normalized_rows(t);
  const Var s = cfg.normalize ? core::row_normalize(student) : student;
  const Var sim = core::row_dot(s, tape.constant(std::move(t)));
  return core::add_constant(core::scale(sim, 1.0 / cfg.temperature), -std::log(cfg.phi));
}

}  // namespace

Var atomic_loss(std::span<const Var> student, std::span<const Var> teacher, const SnippetPairing& pairing,
                const AtomicConfig& cfg) {
  cfg.validate();
  if (pairing.positives.empty()) throw DegenerateInputError("atomic_loss: no positive pairs");
  if (student.empty() || teacher.empty()) throw DegenerateInputError("atomic_loss: empty feature lists");

  auto term = [&](std::size_t si, std::size_t ti, bool positive) {
    if (si >= student.size() || ti >= teacher.size()) throw StructuralError("atomic_loss: pair index out of range");
    if (positive && student[si].rows() != teacher[ti].rows()) {
      throw StructuralError("atomic_loss: positive pair lengths differ");
    }
    const Var z = pair_logits(student[si], teacher[ti], cfg);
    // -log h = softplus(-z); -log(1 - h) = softplus(z).
    return core::mean(core::softplus(positive ? -z : z));
  };

  Var pos = term(pairing.positives[0].first, pairing.positives[0].second, true);
  for (std::size_t p = 1; p < pairing.positives.size(); ++p) {
    pos = pos + term(pairing.positives[p].first, pairing.positives[p].second, true);
  }
  Var loss = core::scale(pos, 1.0 / static_cast<double>(pairing.positives.size()));

  if (!pairing.negatives.empty()) {
    Var neg = term(pairing.negatives[0].first, pairing.negatives[0].second, false);
    for (std::size_t n = 1; n < pairing.negatives.size(); ++n) {
      neg = neg + term(pairing.negatives[n].first, pairing.negatives[n].second, false);
    }
    loss = loss + core::scale(neg, 1.0 / static_cast<double>(pairing.negatives.size()));
  }
  return loss;
}

Var channel_covariance(const Var& features) {
  const Eigen::Index steps = features.rows();
  if (steps < 2) throw DegenerateInputError("channel_covariance: need T >= 2");
  return core::scale(core::gram(core::center_columns(features)), 1.0 / static_cast<double>(steps - 1));
}

Var cov_mask(const Var& cov, double symmetry_tolerance) {
  const Matrix& m = cov.value();
  if (m.rows() != m.cols()) throw StructuralError("cov_mask: matrix is not square");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > symmetry_tolerance) {
    throw NumericalError("cov_mask: matrix asymmetric by " + std::to_string(asym));
  }
  return core::upper_triangle(cov);
}

Matrix cov_unmask(const Matrix& embedding, Eigen::Index channels) {
  if (embedding.size() != channels * (channels + 1) / 2) {
    throw StructuralError("cov_unmask: embedding length does not match C(C+1)/2");
  }
  Matrix m(channels, channels);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < channels; ++i) {
    for (Eigen::Index j = i; j < channels; ++j) {
      m(i, j) = embedding.data()[k];
      m(j, i) = embedding.data()[k];
      ++k;
    }
  }
  return m;
}

Var global_loss(std::span<const Var> student, std::span<const Var> teacher, GlobalMode mode) {
  if (student.size() != teacher.size()) throw StructuralError("global_loss: student/teacher lists differ in length");
  if (student.empty()) throw DegenerateInputError("global_loss: no positive pairs");

  Var total;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const Var gs = cov_mask(channel_covariance(student[i]));
    const Var gt = cov_mask(channel_covariance(core::detach(teacher[i])));
    if (gs.cols() != gt.cols()) {
      throw StructuralError("global_loss: embedding lengths differ (" + std::to_string(gt.cols()) + " vs " +
                            std::to_string(gs.cols()) + ")");
    }
    const Var sq = core::square(gt - gs);
    const Var d = mode == GlobalMode::kMean ? core::mean(sq) : core::sum(sq);
    total = i == 0 ? d : total + d;
  }
  return core::scale(total, 1.0 / static_cast<double>(student.size()));
}

VariationSignal variation_signal(const Var& features, VariationMode mode) {
  if (features.rows() < 2) throw DegenerateInputError("variation_signal: need T >= 2");
  const Var per_step = core::reduce(core::diff_rows(features), core::Axis::kChannel, core::ReduceKind::kSum);
  if (mode == VariationMode::kPerStep) return {mode, per_step};
  return {mode, core::mean(per_step)};
}

Var boundary_distance(const VariationSignal& teacher, const VariationSignal& student) {
  if (teacher.mode != student.mode) throw StructuralError("boundary_distance: variation modes differ");
  if (teacher.values.rows() != student.values.rows()) {
    throw StructuralError("boundary_distance: signal lengths differ");
  }
  return core::mean(core::absolute(teacher.values - student.values));
}

Var boundary_loss(std::span<const Var> student, std::span<const Var> teacher, VariationMode mode) {
  if (student.size() != teacher.size()) throw StructuralError("boundary_loss: student/teacher lists differ in length");
  if (student.empty()) throw DegenerateInputError("boundary_loss: no positive pairs");

  Var total;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const VariationSignal vt = variation_signal(core::detach(teacher[i]), mode);
    const VariationSignal vs = variation_signal(student[i], mode);
    const Var d = boundary_distance(vt, vs);
    total = i == 0 ? d : total + d;
  }
  return core::scale(total, 1.0 / static_cast<double>(student.size()));
}

Var classification_loss(const Var& logits, const Matrix& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw StructuralError("classification_loss: logits " + std::to_string(logits.rows()) + "x" +
                          std::to_string(logits.cols()) + " vs labels " + std::to_string(labels.rows()) + "x" +
                          std::to_string(labels.cols()));
  }
  if (((labels.array() != 0.0) && (labels.array() != 1.0)).any()) {
    throw StructuralError("classification_loss: labels must be 0 or 1");
  }
  Tape& tape = *logits.tape();
  // softplus(z) - y z == -[y log sigma(z) + (1 - y) log(1 - sigma(z))]
  const Var y = tape.constant(labels);
  return core::mean(core::softplus(logits) - core::mul(y, logits));
}

Var total_loss(const Var& cls, const Var& atomic, const Var& global, const Var& boundary, const LossWeights& w) {
  w.validate();
  return cls + core::scale(atomic, w.atomic) + core::scale(global, w.global) + core::scale(boundary, w.boundary);
}

double total_loss(double cls, double atomic, double global, double boundary, const LossWeights& w) {
  w.validate();
  return cls + w.atomic * atomic + w.global * global + w.boundary * boundary;
}

}  // namespace distill::losses
