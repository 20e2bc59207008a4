#include "distill/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "distill/core/binary_io.hpp"
#include "distill/core/ops.hpp"
#include "distill/train/optim.hpp"

namespace distill::train {

using core::Tape;
using core::Var;
using data::Corpus;
using data::Modality;
using model::TemporalFilterParams;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (negatives < 0) throw ConfigError("negatives must be >= 0");
  if (batch_size < 1 || batch_size % (negatives + 1) != 0) {
    throw ConfigError("batch_size must be a positive multiple of negatives + 1");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(plateau_threshold >= 0.0)) throw ConfigError("plateau threshold must be >= 0");
  weights.validate();
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!std::isfinite(phi)) throw ConfigError("phi must be finite");
  if (channels < 1 || layers < 1) throw ConfigError("channels and layers must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,l_cls,l_atomic,l_global,l_boundary,l_total,val_loss,lr,seconds\n";
  char line[512];
  for (const EpochRecord& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.epoch, r.cls, r.atomic,
                  r.global, r.boundary, r.total, r.val_loss, r.learning_rate, r.seconds);
    out += line;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const { core::write_file(path, to_csv()); }

namespace {

std::vector<Matrix> leaf_grads(const Tape& tape, const std::vector<Var>& leaves) {
  std::vector<Matrix> out;
  out.reserve(leaves.size());
  for (const Var& v : leaves) out.push_back(tape.grad(v));
  return out;
}

Var mean_of(const std::vector<Var>& terms) {
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return core::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

// Per-video classification terms, in the order given. Shared by the
// classification-only and the joint objective so the two agree bit for bit
// when the distillation weights are zero.
Var classification_term(const model::BoundFilter& filter, Tape& tape, const Corpus& corpus,
                        std::span<const std::size_t> videos, Modality modality, std::vector<Var>* features) {
  std::vector<Var> terms;
  for (std::size_t i : videos) {
    const data::VideoSample& v = corpus.at(i);
    const Var f = model::forward_features(filter, tape.constant(v.features(modality)));
    const Var logits = model::classify(filter, f);
    terms.push_back(losses::classification_loss(logits, v.snippet_labels()));
    if (features) features->push_back(f);
  }
  return mean_of(terms);
}

model::FilterShape shape_for(const Corpus& corpus, Modality modality, const TrainConfig& cfg) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  return model::FilterShape{static_cast<int>(corpus.front().features(modality).cols()), cfg.channels,
                            static_cast<int>(corpus.front().classes()), cfg.layers};
}

template <typename StepFn, typename AuditFn>
TrainResult run_training(const Corpus& corpus, Modality modality, const TrainConfig& cfg, model::Role role,
                         bool with_negatives, StepFn&& step, AuditFn&& audit) {
  cfg.validate();
  const model::FilterShape shape = shape_for(corpus, modality, cfg);
  auto [train_set, val_set] = split_train_validation(corpus, cfg.validation_fraction, cfg.seed);
  if (train_set.empty()) throw ConfigError("no training videos left after the validation split");

  TrainResult result;
  TemporalFilterParams params = model::init_params(cfg.seed, shape, role);
  result.params = params;

  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  PlateauScheduler scheduler(cfg.plateau_factor, cfg.patience, cfg.plateau_threshold);
  double best_val = std::numeric_limits<double>::infinity();
  const int positives_per_batch = cfg.batch_size / (cfg.negatives + 1);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto batches = with_negatives
                             ? data::make_batches(train_set, cfg.batch_size, cfg.negatives, cfg.seed, epoch)
                             : data::make_batches(train_set, positives_per_batch, 0, cfg.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.learning_rate = adam.learning_rate;
    for (const data::BatchPairing& batch : batches) {
      StepOutcome out = step(params, train_set, batch);
      auto tensors = params.tensors();
      adam_step(tensors, out.grads, adam);
      rec.cls += out.losses.cls;
      rec.atomic += out.losses.atomic;
      rec.global += out.losses.global;
      rec.boundary += out.losses.boundary;
      rec.total += out.losses.total;
      rec.teacher_grad_max = std::max(rec.teacher_grad_max, out.teacher_grad_max);
    }
    const double n = static_cast<double>(batches.size());
    rec.cls /= n;
    rec.atomic /= n;
    rec.global /= n;
    rec.boundary /= n;
    rec.total /= n;
    rec.val_loss = val_set.empty() ? rec.cls : validation_loss(params, val_set, modality);
    rec.teachers_unchanged = audit();

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.params = params;
      result.best_epoch = epoch + 1;
    }
    adam.learning_rate = scheduler.apply(rec.val_loss, adam.learning_rate);
    if (cfg.record_wall_time) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    result.log.rows.push_back(rec);
  }
  return result;
}

}  // namespace

StepOutcome classification_objective(const TemporalFilterParams& params, const Corpus& corpus,
                                     std::span<const std::size_t> videos, Modality modality) {
  if (videos.empty()) throw DegenerateInputError("classification_objective: empty batch");
  Tape tape;
  const model::BoundFilter filter = model::bind(tape, params, true);
  const Var cls = classification_term(filter, tape, corpus, videos, modality, nullptr);
  tape.backward(cls);

  StepOutcome out;
  out.losses.cls = cls.item();
  out.losses.total = out.losses.cls;
  out.grads = leaf_grads(tape, filter.leaves());
  return out;
}

StepOutcome student_objective(const TemporalFilterParams& student, std::span<const TeacherModel> teachers,
                              const Corpus& corpus, const data::BatchPairing& batch, Modality student_modality,
                              const TrainConfig& cfg, double phi) {
  if (batch.positives.empty()) throw DegenerateInputError("student_objective: batch has no positives");
  Tape tape;
  const model::BoundFilter filter = model::bind(tape, student, true);
  std::vector<Var> student_features;
  const Var cls = classification_term(filter, tape, corpus, batch.positives, student_modality, &student_features);

  const losses::AtomicConfig atomic_cfg{phi, cfg.temperature, cfg.normalize};
  std::vector<std::vector<Var>> teacher_leaves;
  Var atomic, global, boundary;
  for (const TeacherModel& teacher : teachers) {
    if (teacher.params.shape().channels != student.shape().channels) {
      throw StructuralError("teacher has " + std::to_string(teacher.params.shape().channels) +
                            " channels, student " + std::to_string(student.shape().channels));
    }
    const model::BoundFilter frozen = model::bind(tape, teacher.params, false);
    teacher_leaves.push_back(frozen.leaves());

    std::map<std::size_t, Var> cache;
    auto teacher_features = [&](std::size_t video) {
      auto it = cache.find(video);
      if (it != cache.end()) return it->second;
      const Var f = model::forward_features(frozen, tape.constant(corpus.at(video).features(teacher.modality)));
      cache.emplace(video, f);
      return f;
    };

    // Teacher list: positives first (aligned with the student list), then
    // the negative videos in batch order.
    std::vector<Var> teacher_list;
    losses::SnippetPairing pairing;
    std::map<std::size_t, std::size_t> student_slot;
    for (std::size_t p = 0; p < batch.positives.size(); ++p) {
      teacher_list.push_back(teacher_features(batch.positives[p]));
      pairing.positives.emplace_back(p, p);
      student_slot.emplace(batch.positives[p], p);
    }
    for (const auto& [s, t] : batch.negatives) {
      pairing.negatives.emplace_back(student_slot.at(s), teacher_list.size());
      teacher_list.push_back(teacher_features(t));
    }
    const std::span<const Var> positives_only(teacher_list.data(), batch.positives.size());

    const Var a = losses::atomic_loss(student_features, teacher_list, pairing, atomic_cfg);
    const Var g = losses::global_loss(student_features, positives_only, cfg.global_mode);
    const Var b = losses::boundary_loss(student_features, positives_only, cfg.variation_mode);
    atomic = atomic.valid() ? atomic + a : a;
    global = global.valid() ? global + g : g;
    boundary = boundary.valid() ? boundary + b : b;
  }

  StepOutcome out;
  Var total = cls;
  if (!teachers.empty()) total = losses::total_loss(cls, atomic, global, boundary, cfg.weights);
  tape.backward(total);

  out.losses.cls = cls.item();
  if (!teachers.empty()) {
    out.losses.atomic = atomic.item();
    out.losses.global = global.item();
    out.losses.boundary = boundary.item();
  }
  out.losses.total = total.item();
  out.grads = leaf_grads(tape, filter.leaves());
  for (const auto& leaves : teacher_leaves) {
    for (const Var& v : leaves) {
      if (tape.has_grad(v)) out.teacher_grad_max = std::max(out.teacher_grad_max, tape.grad(v).cwiseAbs().maxCoeff());
    }
  }
  return out;
}

std::pair<Corpus, Corpus> split_train_validation(const Corpus& corpus, double fraction, std::uint64_t seed) {
  const std::size_t n = corpus.size();
  std::size_t held_out = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (fraction > 0.0 && held_out == 0 && n >= 2) held_out = 1;
  held_out = std::min(held_out, n);

  std::vector<std::size_t> order = data::epoch_order(n, seed ^ 0x9e3779b97f4a7c15ULL, 0);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held_out));
  std::sort(val.begin(), val.end());
  std::vector<bool> is_val(n, false);
  for (std::size_t i : val) is_val[i] = true;

  Corpus train_part, val_part;
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? val_part : train_part).push_back(corpus[i]);
  return {std::move(train_part), std::move(val_part)};
}

double validation_loss(const TemporalFilterParams& params, const Corpus& corpus, Modality modality) {
  if (corpus.empty()) return 0.0;
  double total = 0.0;
  for (const data::VideoSample& v : corpus) {
    Tape tape;
    const model::BoundFilter filter = model::bind(tape, params, false);
    const Var f = model::forward_features(filter, tape.constant(v.features(modality)));
    total += losses::classification_loss(model::classify(filter, f), v.snippet_labels()).item();
  }
  return total / static_cast<double>(corpus.size());
}

TrainResult train_classifier(const Corpus& corpus, Modality modality, const TrainConfig& cfg, model::Role role) {
  auto step = [modality](const TemporalFilterParams& params, const Corpus& train_set, const data::BatchPairing& batch) {
    return classification_objective(params, train_set, batch.positives, modality);
  };
  return run_training(corpus, modality, cfg, role, false, step, [] { return true; });
}

TrainResult train_teacher(const Corpus& corpus, Modality modality, const TrainConfig& cfg) {
  return train_classifier(corpus, modality, cfg, model::Role::kTeacher);
}

TrainResult train_student(const Corpus& corpus, std::span<const TeacherModel> teachers, Modality student_modality,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  const int channels = cfg.channels;
  std::vector<std::string> snapshots;
  for (const TeacherModel& t : teachers) {
    if (t.params.shape().channels != channels || t.params.shape().layers != cfg.layers) {
      throw StructuralError("teacher architecture " + t.params.fingerprint() + " does not match the student (L=" +
                            std::to_string(cfg.layers) + " C=" + std::to_string(channels) + ")");
    }
    snapshots.push_back(model::encode_checkpoint(t.params));
  }
  const double phi =
      cfg.phi > 0.0 ? cfg.phi : losses::corpus_phi(std::max(cfg.negatives, 1), data::total_snippets(corpus));

  auto step = [&](const TemporalFilterParams& params, const Corpus& train_set, const data::BatchPairing& batch) {
    return student_objective(params, teachers, train_set, batch, student_modality, cfg, phi);
  };
  auto audit = [&] {
    for (std::size_t i = 0; i < teachers.size(); ++i) {
      if (model::encode_checkpoint(teachers[i].params) != snapshots[i]) return false;
    }
    return true;
  };
  return run_training(corpus, student_modality, cfg, model::Role::kStudent, true, step, audit);
}

}  // namespace distill::train
