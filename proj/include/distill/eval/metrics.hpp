#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "distill/data/dataset.hpp"
#include "distill/model/temporal_filter.hpp"

namespace distill::eval {

using core::Matrix;

/// Half-open frame interval [start, end) of class `cls` in video `video`.
struct DetectionSegment {
  int cls = 0;
  int start = 0;
  int end = 0;
  double confidence = 1.0;
  int video = 0;
};

struct EvalConfig {
  std::vector<double> iou_thresholds{0.1, 0.3, 0.5};
  double binarize_threshold = 0.5;
  int max_gap = 2;
  int min_duration = 2;

  void validate() const;
};

struct ApResult {
  std::vector<std::optional<double>> per_class;  // empty for classes without positives
  double map = 0.0;
};

/// Non-interpolated AP of one ranking: scores descending, ties by index.
double average_precision(const std::vector<double>& scores, const std::vector<bool>& relevant, std::size_t positives);

ApResult frame_map(const Matrix& prob, const data::LabelMatrix& labels);

std::vector<DetectionSegment> segments_from_scores(const Matrix& prob, const EvalConfig& cfg, int video = 0);

double temporal_iou(const DetectionSegment& a, const DetectionSegment& b);

ApResult event_map(const std::vector<DetectionSegment>& predictions, const std::vector<DetectionSegment>& ground_truth,
                   int classes, double threshold);

struct EventResult {
  double threshold = 0.0;
  ApResult ap;
};

struct EvalReport {
  ApResult frame;
  std::vector<EventResult> events;
  std::size_t predictions = 0;
  std::size_t ground_truth = 0;

  /// Event mAP at `threshold`; ConfigError when it was not evaluated.
  double event_map_at(double threshold) const;
  std::string to_json() const;
  std::string to_csv() const;
  void write(const std::filesystem::path& dir, const std::string& stem = "eval") const;
};

/// Frame probabilities for one video: logits upsampled to frame rate, then sigmoid.
Matrix frame_probabilities(const model::TemporalFilterParams& params, const data::VideoSample& video,
                           data::Modality modality);

/// Frame mAP over all frames of the corpus (concatenated) and event mAP per threshold.
EvalReport evaluate_corpus(const model::TemporalFilterParams& params, const data::Corpus& corpus,
                           data::Modality modality, const EvalConfig& cfg);

}  // namespace distill::eval
