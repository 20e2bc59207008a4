#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "distill/core/tape.hpp"

namespace distill::model {

using core::Matrix;
using core::Tape;
using core::Var;

enum class Role { kTeacher, kStudent };

const char* to_string(Role role) noexcept;

/// Architecture of a single-stage dilated residual temporal filter.
/// Teacher and student must agree on `layers` and `channels`.
struct FilterShape {
  int input_dim = 64;
  int channels = 32;
  int classes = 8;
  int layers = 5;

  bool operator==(const FilterShape&) const = default;
};

struct ResidualLayer {
  Matrix dilated;    // 3*C x C, taps stacked
  Matrix pointwise;  // C x C
};

/// Bias-free weights. Layer l uses dilation 2^l.
struct TemporalFilterParams {
  Role role = Role::kStudent;
  Matrix input_projection;  // Din x C
  std::vector<ResidualLayer> layers;
  Matrix classifier;  // C x K

  FilterShape shape() const;
  std::size_t parameter_count() const;

  /// Kernels in declaration order: projection, (dilated, pointwise) per
  /// layer, classifier. Checkpoints and the optimizer use this order.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;

  /// "L=5 C=32 dilations=1,2,4,8,16"; identical for compatible networks.
  std::string fingerprint() const;
};

constexpr int kKernelTaps = 3;

inline int layer_dilation(int layer) { return 1 << layer; }

/// Radius beyond which an input perturbation cannot reach: 1 + sum_l 2^l.
int receptive_radius(int layers);

/// Uniform(-b, b) with b = sqrt(1 / fan_in) for every kernel.
TemporalFilterParams init_params(std::uint64_t seed, const FilterShape& shape, Role role = Role::kStudent);
TemporalFilterParams zero_params(const FilterShape& shape, Role role = Role::kStudent);

/// A per-video T x C feature map produced by a filter.
struct FeatureSequence {
  Role role = Role::kStudent;
  std::uint32_t video_id = 0;
  Matrix features;
};

/// Parameters placed on a tape. Frozen bindings create leaves that never
/// require gradients.
struct BoundFilter {
  FilterShape shape;
  Var input_projection;
  std::vector<Var> dilated;
  std::vector<Var> pointwise;
  Var classifier;

  std::vector<Var> leaves() const;
};

BoundFilter bind(Tape& tape, const TemporalFilterParams& params, bool trainable);

/// Pre-classifier feature map; throws StructuralError on input-dim mismatch
/// and DegenerateInputError for T < 2.
Var forward_features(const BoundFilter& filter, const Var& input);
Var classify(const BoundFilter& filter, const Var& features);

FeatureSequence forward_features(const TemporalFilterParams& params, const Matrix& input,
                                 std::uint32_t video_id = 0);
Matrix classify(const TemporalFilterParams& params, const FeatureSequence& features);

/// Linear interpolation to a longer time axis with endpoints pinned.
Matrix upsample_logits(const Matrix& logits, Eigen::Index target_len);

// Checkpoint file: "DSQ1", then L, C, K, Din as u32 LE, then every kernel in
// declaration order as row-major f64 LE.
std::string encode_checkpoint(const TemporalFilterParams& params);
TemporalFilterParams decode_checkpoint(const std::string& bytes, Role role = Role::kStudent);
void save_checkpoint(const std::filesystem::path& path, const TemporalFilterParams& params);
TemporalFilterParams load_checkpoint(const std::filesystem::path& path, Role role = Role::kStudent);

}  // namespace distill::model
