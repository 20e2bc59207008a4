#include "distill/model/temporal_filter.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "distill/core/binary_io.hpp"
#include "distill/core/ops.hpp"

namespace distill::model {

const char* to_string(Role role) noexcept { return role == Role::kTeacher ? "teacher" : "student"; }

FilterShape TemporalFilterParams::shape() const {
  return FilterShape{static_cast<int>(input_projection.rows()), static_cast<int>(input_projection.cols()),
                     static_cast<int>(classifier.cols()), static_cast<int>(layers.size())};
}

std::size_t TemporalFilterParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

std::vector<Matrix*> TemporalFilterParams::tensors() {
  std::vector<Matrix*> out{&input_projection};
  for (ResidualLayer& layer : layers) {
    out.push_back(&layer.dilated);
    out.push_back(&layer.pointwise);
  }
  out.push_back(&classifier);
  return out;
}

std::vector<const Matrix*> TemporalFilterParams::tensors() const {
  std::vector<const Matrix*> out{&input_projection};
  for (const ResidualLayer& layer : layers) {
    out.push_back(&layer.dilated);
    out.push_back(&layer.pointwise);
  }
  out.push_back(&classifier);
  return out;
}

std::string TemporalFilterParams::fingerprint() const {
  std::ostringstream os;
  os << "L=" << layers.size() << " C=" << input_projection.cols() << " dilations=";
  for (std::size_t l = 0; l < layers.size(); ++l) os << (l ? "," : "") << layer_dilation(static_cast<int>(l));
  return os.str();
}

int receptive_radius(int layers) {
  int radius = 1;
  for (int l = 0; l < layers; ++l) radius += layer_dilation(l);
  return radius;
}

namespace {

void check_shape(const FilterShape& s) {
  if (s.input_dim <= 0 || s.channels <= 0 || s.classes <= 0 || s.layers <= 0) {
    throw StructuralError("filter dimensions must be positive");
  }
}

TemporalFilterParams allocate(const FilterShape& s, Role role) {
  check_shape(s);
  TemporalFilterParams p;
  p.role = role;
  p.input_projection = Matrix::Zero(s.input_dim, s.channels);
  p.layers.resize(static_cast<std::size_t>(s.layers));
  for (ResidualLayer& layer : p.layers) {
    layer.dilated = Matrix::Zero(kKernelTaps * s.channels, s.channels);
    layer.pointwise = Matrix::Zero(s.channels, s.channels);
  }
  p.classifier = Matrix::Zero(s.channels, s.classes);
  return p;
}

}  // namespace

TemporalFilterParams zero_params(const FilterShape& shape, Role role) { return allocate(shape, role); }

TemporalFilterParams init_params(std::uint64_t seed, const FilterShape& shape, Role role) {
  TemporalFilterParams p = allocate(shape, role);
  std::mt19937_64 rng(seed);
  for (Matrix* m : p.tensors()) {
    // Fan-in is the number of rows: taps * Cin for the dilated kernels.
    const double bound = std::sqrt(1.0 / static_cast<double>(m->rows()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = dist(rng);
  }
  return p;
}

std::vector<Var> BoundFilter::leaves() const {
  std::vector<Var> out{input_projection};
  for (std::size_t l = 0; l < dilated.size(); ++l) {
    out.push_back(dilated[l]);
    out.push_back(pointwise[l]);
  }
  out.push_back(classifier);
  return out;
}

BoundFilter bind(Tape& tape, const TemporalFilterParams& params, bool trainable) {
  BoundFilter b;
  b.shape = params.shape();
  b.input_projection = tape.leaf(params.input_projection, trainable);
  for (const ResidualLayer& layer : params.layers) {
    b.dilated.push_back(tape.leaf(layer.dilated, trainable));
    b.pointwise.push_back(tape.leaf(layer.pointwise, trainable));
  }
  b.classifier = tape.leaf(params.classifier, trainable);
  return b;
}

Var forward_features(const BoundFilter& filter, const Var& input) {
  if (input.cols() != filter.shape.input_dim) {
    throw StructuralError("forward_features: input has " + std::to_string(input.cols()) + " channels, filter expects " +
                          std::to_string(filter.shape.input_dim));
  }
  if (input.rows() < 2) throw DegenerateInputError("forward_features: sequences need T >= 2");

  Var y = core::matmul(input, filter.input_projection);
  for (std::size_t l = 0; l < filter.dilated.size(); ++l) {
    Var h = core::relu(core::dilated_conv1d(y, filter.dilated[l], layer_dilation(static_cast<int>(l))));
    y = y + core::matmul(h, filter.pointwise[l]);
  }
  return y;
}

Var classify(const BoundFilter& filter, const Var& features) {
  if (features.cols() != filter.shape.channels) {
    throw StructuralError("classify: feature channels " + std::to_string(features.cols()) + " != filter channels " +
                          std::to_string(filter.shape.channels));
  }
  return core::matmul(features, filter.classifier);
}

FeatureSequence forward_features(const TemporalFilterParams& params, const Matrix& input, std::uint32_t video_id) {
  Tape tape;
  const BoundFilter bound = bind(tape, params, false);
  return FeatureSequence{params.role, video_id, forward_features(bound, tape.constant(input)).value()};
}

Matrix classify(const TemporalFilterParams& params, const FeatureSequence& features) {
  if (features.features.cols() != params.classifier.rows()) {
    throw StructuralError("classify: feature channels do not match the classifier");
  }
  return features.features * params.classifier;
}

Matrix upsample_logits(const Matrix& logits, Eigen::Index target_len) {
  const Eigen::Index steps = logits.rows();
  if (target_len < steps) {
    throw StructuralError("upsample_logits: target length " + std::to_string(target_len) + " < source length " +
                          std::to_string(steps));
  }
  if (target_len == steps) return logits;
  if (steps == 0) throw DegenerateInputError("upsample_logits: empty input");

  Matrix out(target_len, logits.cols());
  if (steps == 1) {
    out.rowwise() = logits.row(0);
    return out;
  }
  const double ratio = static_cast<double>(steps - 1) / static_cast<double>(target_len - 1);
  for (Eigen::Index u = 0; u < target_len; ++u) {
    const double pos = static_cast<double>(u) * ratio;
    const auto lo = std::min(static_cast<Eigen::Index>(std::floor(pos)), steps - 2);
    const double frac = pos - static_cast<double>(lo);
    out.row(u) = (1.0 - frac) * logits.row(lo) + frac * logits.row(lo + 1);
  }
  out.row(target_len - 1) = logits.row(steps - 1);
  return out;
}

// --- checkpoints -----------------------------------------------------------

std::string encode_checkpoint(const TemporalFilterParams& params) {
  const FilterShape s = params.shape();
  core::ByteWriter w;
  w.magic("DSQ1");
  w.u32(static_cast<std::uint32_t>(s.layers));
  w.u32(static_cast<std::uint32_t>(s.channels));
  w.u32(static_cast<std::uint32_t>(s.classes));
  w.u32(static_cast<std::uint32_t>(s.input_dim));
  for (const Matrix* m : params.tensors()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) w.f64(m->data()[i]);
  }
  return w.bytes();
}

TemporalFilterParams decode_checkpoint(const std::string& bytes, Role role) {
  core::ByteReader r(bytes);
  r.expect_magic("DSQ1");
  FilterShape s;
  s.layers = static_cast<int>(r.u32());
  s.channels = static_cast<int>(r.u32());
  s.classes = static_cast<int>(r.u32());
  s.input_dim = static_cast<int>(r.u32());
  if (s.layers <= 0 || s.channels <= 0 || s.classes <= 0 || s.input_dim <= 0 || s.layers > 30) {
    throw FormatError("invalid checkpoint dimensions", r.offset());
  }
  TemporalFilterParams p = zero_params(s, role);
  for (Matrix* m : p.tensors()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = r.f64();
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload", r.offset());
  for (const Matrix* m : p.tensors()) {
    if (!m->allFinite()) throw FormatError("non-finite weight in checkpoint", r.offset());
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const TemporalFilterParams& params) {
  core::write_file(path, encode_checkpoint(params));
}

TemporalFilterParams load_checkpoint(const std::filesystem::path& path, Role role) {
  return decode_checkpoint(core::read_file(path), role);
}

}  // namespace distill::model
