#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "distill/core/tape.hpp"

namespace distill::data {

using core::Matrix;
using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feature streams of a video. Appearance plays the RGB role (student at
/// deployment); motion and pose are privileged training-time modalities.
enum class Modality : int { kAppearance = 0, kMotion = 1, kPose = 2 };

const char* to_string(Modality m) noexcept;
Modality parse_modality(const std::string& name);

/// Half-open [start, end) interval of class `cls` at ground-truth resolution.
struct SegmentLabel {
  int cls = 0;
  int start = 0;
  int end = 0;

  bool operator==(const SegmentLabel&) const = default;
};

struct VideoSample {
  std::uint32_t id = 0;
  std::vector<Matrix> modalities;  // each T x Din, indexed by Modality
  LabelMatrix labels;              // Tgt x K, Tgt = T * stride
  int stride = 1;
  std::vector<SegmentLabel> segments;

  Eigen::Index snippets() const { return modalities.empty() ? 0 : modalities.front().rows(); }
  Eigen::Index frames() const { return labels.rows(); }
  Eigen::Index classes() const { return labels.cols(); }

  const Matrix& features(Modality m) const;

  /// Sorted ids of the classes that occur in the video.
  std::vector<int> class_set() const;

  /// 0/1 labels per snippet, read at each snippet's centre frame.
  Matrix snippet_labels() const;

  /// Exact equality of every field (bitwise on features).
  bool operator==(const VideoSample& other) const;
};

using Corpus = std::vector<VideoSample>;

std::size_t total_snippets(const Corpus& corpus);

/// length x K, cell (t, k) = 1 iff a class-k segment covers frame t.
LabelMatrix dense_labels_from_segments(const std::vector<SegmentLabel>& segments, int length, int classes);

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int videos = 200;
  std::uint32_t first_id = 0;  // ids first_id .. first_id + videos - 1
  int classes = 8;
  int input_dim = 64;
  int min_snippets = 48;
  int max_snippets = 96;
  int min_segments = 2;
  int max_segments = 6;
  int min_segment_len = 6;
  int max_segment_len = 32;
  int stride = 1;
  double class_scale = 1.0;       // per-entry std of class embeddings
  double noise_scale = 1.0;       // per-entry std of i.i.d. snippet noise
  double drift_scale = 1.0;       // amplitude of the slow appearance drift
  double pulse_amplitude = 2.0;   // per-entry RMS of motion boundary pulses
  double overlap_probability = 0.3;
  bool pose_modality = true;

  void validate() const;
};

/// Per-video randomness is seeded from (seed, id); class embeddings from
/// seed alone, so corpora with disjoint id ranges share one class world.
Corpus generate_synthetic_corpus(const SyntheticConfig& cfg);

// Feature file "DSF1": modality count, T, Din, Tgt, K, stride as u32 LE;
// per modality T*Din f64 LE; Tgt*K label bytes; u32 segment count and
// (k, start, end) u32 triples.
std::string encode_features(const VideoSample& sample);
VideoSample decode_features(const std::string& bytes, std::uint32_t id = 0);
void save_features(const std::filesystem::path& path, const VideoSample& sample);
/// The video id is parsed from a "video_<id>.dsf" file name when present.
VideoSample load_features(const std::filesystem::path& path);

std::filesystem::path feature_path(const std::filesystem::path& dir, std::uint32_t id);
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

/// One mini-batch: P positives (student and teacher see the same video) and
/// N negatives per positive (teacher sees a video with a different class set).
struct BatchPairing {
  int negatives_per_positive = 1;
  std::vector<std::size_t> positives;                          // corpus indices
  std::vector<std::pair<std::size_t, std::size_t>> negatives;  // (student, teacher)

  std::size_t batch_size() const { return positives.size() + negatives.size(); }
};

bool class_sets_differ(const VideoSample& a, const VideoSample& b);

/// Deterministic permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Batches of P = B / (N + 1) positives in epoch_order; the last partial
/// batch is kept. Negatives are drawn from a separate stream so the positive
/// schedule does not depend on N.
std::vector<BatchPairing> make_batches(const Corpus& corpus, int batch_size, int negatives, std::uint64_t seed,
                                       std::uint64_t epoch = 0);

}  // namespace distill::data
