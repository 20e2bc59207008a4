#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "distill/data/dataset.hpp"
#include "distill/losses/losses.hpp"
#include "distill/model/temporal_filter.hpp"

namespace distill::train {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 8;
  int negatives = 1;
  double learning_rate = 1e-3;
  double plateau_factor = 0.3;
  int patience = 10;
  double plateau_threshold = 1e-6;

  losses::LossWeights weights;
  losses::GlobalMode global_mode = losses::GlobalMode::kMean;
  losses::VariationMode variation_mode = losses::VariationMode::kPerStep;
  double temperature = 1.0;
  bool normalize = true;
  double phi = 0.0;  // <= 0: N / (snippets in the training corpus)

  int channels = 32;
  int layers = 5;

  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  bool record_wall_time = true;  // false writes 0 seconds, for byte-identical logs

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double cls = 0, atomic = 0, global = 0, boundary = 0, total = 0;
  double val_loss = 0;
  double learning_rate = 0;
  double seconds = 0;
  // Frozen-teacher audit; not part of the CSV.
  double teacher_grad_max = 0;
  bool teachers_unchanged = true;
};

struct TrainLog {
  std::vector<EpochRecord> rows;

  /// epoch,l_cls,l_atomic,l_global,l_boundary,l_total,val_loss,lr,seconds
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  model::TemporalFilterParams params;  // best-validation weights
  TrainLog log;
  int best_epoch = -1;  // -1: initialization kept
};

struct TeacherModel {
  model::TemporalFilterParams params;
  data::Modality modality = data::Modality::kMotion;
};

struct LossComponents {
  double cls = 0, atomic = 0, global = 0, boundary = 0, total = 0;
};

/// Loss values and gradients (in TemporalFilterParams::tensors() order) of
/// one mini-batch.
struct StepOutcome {
  LossComponents losses;
  std::vector<core::Matrix> grads;
  double teacher_grad_max = 0;  // largest teacher-side adjoint; must stay 0
};

/// Classification loss averaged over the given videos.
StepOutcome classification_objective(const model::TemporalFilterParams& params, const data::Corpus& corpus,
                                     std::span<const std::size_t> videos, data::Modality modality);

/// Joint objective of one batch; distillation terms are summed over
/// teachers. Sequence-level terms and the classification term use the
/// positives only.
StepOutcome student_objective(const model::TemporalFilterParams& student, std::span<const TeacherModel> teachers,
                              const data::Corpus& corpus, const data::BatchPairing& batch,
                              data::Modality student_modality, const TrainConfig& cfg, double phi);

/// Seeded hold-out split: (train, validation).
std::pair<data::Corpus, data::Corpus> split_train_validation(const data::Corpus& corpus, double fraction,
                                                             std::uint64_t seed);

/// Mean classification loss of `params` over a corpus; 0 for an empty one.
double validation_loss(const model::TemporalFilterParams& params, const data::Corpus& corpus, data::Modality modality);

/// Classification-only training with Adam and plateau scheduling, over the
/// same positive schedule a student would see.
TrainResult train_classifier(const data::Corpus& corpus, data::Modality modality, const TrainConfig& cfg,
                             model::Role role);

TrainResult train_teacher(const data::Corpus& corpus, data::Modality modality, const TrainConfig& cfg);

/// Distills frozen teachers into a student that sees `student_modality`.
TrainResult train_student(const data::Corpus& corpus, std::span<const TeacherModel> teachers,
                          data::Modality student_modality, const TrainConfig& cfg);

}  // namespace distill::train
