#include "distill/diagnostics/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <random>

#include "distill/core/gradcheck.hpp"
#include "distill/core/ops.hpp"
#include "distill/losses/losses.hpp"
#include "distill/model/temporal_filter.hpp"

namespace distill::diagnostics {

namespace {

using core::Matrix;
using core::Tape;
using core::Var;

constexpr double kStep = 1e-6;

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// A list of feature maps where entry `active` is the probed leaf.
struct FeatureList {
  std::vector<Matrix> values;

  std::vector<Var> bind(Tape& tape, std::size_t active, const Var& leaf) const {
    std::vector<Var> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back(i == active ? leaf : tape.constant(values[i]));
    return out;
  }
};

// Max error over probing each student entry in turn.
double check_student_list(const FeatureList& students,
                          const std::function<Var(Tape&, const std::vector<Var>&)>& loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < students.values.size(); ++i) {
    auto fn = [&](Tape& tape, const Var& leaf) { return loss(tape, students.bind(tape, i, leaf)); };
    worst = std::max(worst, core::finite_diff_check(fn, students.values[i], kStep));
  }
  return worst;
}

std::vector<Var> constants(Tape& tape, const FeatureList& list) {
  std::vector<Var> out;
  for (const Matrix& m : list.values) out.push_back(tape.constant(m));
  return out;
}

double atomic_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int channels = uniform(rng, 2, 6);
  const int pairs = uniform(rng, 1, 3);
  FeatureList students, teachers;
  for (int p = 0; p < pairs; ++p) {
    const int steps = uniform(rng, 3, 8);
    students.values.push_back(random_matrix(rng, steps, channels));
    teachers.values.push_back(random_matrix(rng, steps, channels));
  }
  const int extra = uniform(rng, 1, 2);
  for (int j = 0; j < extra; ++j) teachers.values.push_back(random_matrix(rng, uniform(rng, 3, 8), channels));

  losses::SnippetPairing pairing;
  for (int p = 0; p < pairs; ++p) {
    pairing.positives.emplace_back(p, p);
    pairing.negatives.emplace_back(p, pairs + uniform(rng, 0, extra - 1));
  }
  const losses::AtomicConfig cfg{std::uniform_real_distribution<double>(0.05, 2.0)(rng),
                                 std::uniform_real_distribution<double>(0.5, 2.0)(rng), (seed % 2) == 0};
  return check_student_list(students, [&](Tape& tape, const std::vector<Var>& s) {
    return losses::atomic_loss(s, constants(tape, teachers), pairing, cfg);
  });
}

double global_case(std::uint64_t seed, losses::GlobalMode mode) {
  std::mt19937_64 rng(seed);
  const int channels = uniform(rng, 2, 6);
  const int pairs = uniform(rng, 1, 3);
  FeatureList students, teachers;
  for (int p = 0; p < pairs; ++p) {
    const int steps = uniform(rng, 3, 8);
    students.values.push_back(random_matrix(rng, steps, channels));
    teachers.values.push_back(random_matrix(rng, steps, channels));
  }
  return check_student_list(students, [&](Tape& tape, const std::vector<Var>& s) {
    return losses::global_loss(s, constants(tape, teachers), mode);
  });
}

double boundary_case(std::uint64_t seed, losses::VariationMode mode) {
  std::mt19937_64 rng(seed);
  const int channels = uniform(rng, 2, 6);
  const int pairs = uniform(rng, 1, 3);
  FeatureList students, teachers;
  for (int p = 0; p < pairs; ++p) {
    const int steps = uniform(rng, 3, 8);
    students.values.push_back(random_matrix(rng, steps, channels));
    teachers.values.push_back(random_matrix(rng, steps, channels));
  }
  return check_student_list(students, [&](Tape& tape, const std::vector<Var>& s) {
    return losses::boundary_loss(s, constants(tape, teachers), mode);
  });
}

double classification_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int steps = uniform(rng, 2, 8);
  const int classes = uniform(rng, 1, 6);
  const Matrix logits = random_matrix(rng, steps, classes, 2.0);
  Matrix labels(steps, classes);
  std::bernoulli_distribution coin(0.4);
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = coin(rng) ? 1.0 : 0.0;
  return core::finite_diff_check(
      [&](Tape&, const Var& z) { return losses::classification_loss(z, labels); }, logits, kStep);
}

// Every kernel and the input of a small filter, through the classification head.
double filter_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const model::FilterShape shape{uniform(rng, 2, 5), uniform(rng, 2, 6), uniform(rng, 2, 4), uniform(rng, 1, 3)};
  const int steps = uniform(rng, 4, 8);
  const model::TemporalFilterParams params = model::init_params(seed, shape);
  const Matrix input = random_matrix(rng, steps, shape.input_dim);
  Matrix labels(steps, shape.classes);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels.data()[i] = coin(rng) ? 1.0 : 0.0;

  std::vector<const Matrix*> kernels = params.tensors();
  double worst = 0.0;
  // slot -1 probes the input, slot i >= 0 probes kernel i.
  for (int slot = -1; slot < static_cast<int>(kernels.size()); ++slot) {
    auto fn = [&](Tape& tape, const Var& leaf) {
      model::BoundFilter f = model::bind(tape, params, false);
      std::vector<Var*> handles{&f.input_projection};
      for (std::size_t l = 0; l < f.dilated.size(); ++l) {
        handles.push_back(&f.dilated[l]);
        handles.push_back(&f.pointwise[l]);
      }
      handles.push_back(&f.classifier);
      Var x = tape.constant(input);
      if (slot < 0) {
        x = leaf;
      } else {
        *handles[static_cast<std::size_t>(slot)] = leaf;
      }
      return losses::classification_loss(model::classify(f, model::forward_features(f, x)), labels);
    };
    const Matrix& at = slot < 0 ? input : *kernels[static_cast<std::size_t>(slot)];
    worst = std::max(worst, core::finite_diff_check(fn, at, kStep));
  }
  return worst;
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suites(int seeds, double tolerance) {
  const std::vector<std::pair<std::string, std::function<double(std::uint64_t)>>> suites{
      {"atomic_loss", atomic_case},
      {"global_loss/mean", [](std::uint64_t s) { return global_case(s, losses::GlobalMode::kMean); }},
      {"global_loss/sum", [](std::uint64_t s) { return global_case(s, losses::GlobalMode::kSum); }},
      {"boundary_loss/per-step", [](std::uint64_t s) { return boundary_case(s, losses::VariationMode::kPerStep); }},
      {"boundary_loss/scalar", [](std::uint64_t s) { return boundary_case(s, losses::VariationMode::kScalar); }},
      {"classification_loss", classification_case},
      {"temporal_filter", filter_case},
  };
  std::vector<SuiteResult> out;
  for (const auto& [name, run] : suites) {
    SuiteResult r{name, seeds, 0.0, true};
    for (int s = 0; s < seeds; ++s) r.max_error = std::max(r.max_error, run(static_cast<std::uint64_t>(s) + 1));
    r.passed = r.max_error < tolerance;
    out.push_back(r);
  }
  return out;
}

}  // namespace distill::diagnostics
