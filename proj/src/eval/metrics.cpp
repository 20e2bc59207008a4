#include "distill/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "distill/core/binary_io.hpp"

namespace distill::eval {

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
  for (double t : iou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU threshold " + std::to_string(t) + " outside (0, 1]");
  }
  if (!std::isfinite(binarize_threshold)) throw ConfigError("binarization threshold must be finite");
  if (max_gap < 0 || min_duration < 0) throw ConfigError("max_gap and min_duration must be >= 0");
}

double average_precision(const std::vector<double>& scores, const std::vector<bool>& relevant, std::size_t positives) {
  if (scores.size() != relevant.size()) throw StructuralError("average_precision: score/label length mismatch");
  if (positives == 0) throw DegenerateInputError("average_precision: no positives");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!relevant[order[rank]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return sum / static_cast<double>(positives);
}

namespace {

double mean_present(const std::vector<std::optional<double>>& per_class) {
  double sum = 0.0;
  int n = 0;
  for (const auto& ap : per_class) {
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) throw DegenerateInputError("no class has any positive");
  return sum / n;
}

}  // namespace

ApResult frame_map(const Matrix& prob, const data::LabelMatrix& labels) {
  if (prob.rows() != labels.rows() || prob.cols() != labels.cols()) {
    throw StructuralError("frame_map: scores are " + std::to_string(prob.rows()) + "x" + std::to_string(prob.cols()) +
                          ", labels " + std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
  }
  ApResult out;
  for (Eigen::Index k = 0; k < prob.cols(); ++k) {
    std::vector<double> scores(static_cast<std::size_t>(prob.rows()));
    std::vector<bool> relevant(scores.size());
    std::size_t positives = 0;
    for (Eigen::Index t = 0; t < prob.rows(); ++t) {
      scores[t] = prob(t, k);
      relevant[t] = labels(t, k) != 0;
      positives += relevant[t];
    }
    if (positives == 0) {
      out.per_class.emplace_back();
    } else {
      out.per_class.emplace_back(average_precision(scores, relevant, positives));
    }
  }
  out.map = mean_present(out.per_class);
  return out;
}

std::vector<DetectionSegment> segments_from_scores(const Matrix& prob, const EvalConfig& cfg, int video) {
  std::vector<DetectionSegment> out;
  const auto frames = static_cast<int>(prob.rows());
  for (Eigen::Index k = 0; k < prob.cols(); ++k) {
    std::vector<std::pair<int, int>> runs;
    for (int t = 0; t < frames;) {
      if (!(prob(t, k) >= cfg.binarize_threshold)) {
        ++t;
        continue;
      }
      int end = t;
      while (end < frames && prob(end, k) >= cfg.binarize_threshold) ++end;
      if (!runs.empty() && t - runs.back().second <= cfg.max_gap) {
        runs.back().second = end;
      } else {
        runs.emplace_back(t, end);
      }
      t = end;
    }
    for (const auto& [start, end] : runs) {
      if (end - start < cfg.min_duration) continue;
      const double confidence = prob.col(k).segment(start, end - start).mean();
      out.push_back({static_cast<int>(k), start, end, confidence, video});
    }
  }
  return out;
}

double temporal_iou(const DetectionSegment& a, const DetectionSegment& b) {
  const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const int uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

ApResult event_map(const std::vector<DetectionSegment>& predictions, const std::vector<DetectionSegment>& ground_truth,
                   int classes, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("IoU threshold " + std::to_string(threshold) + " outside (0, 1]");
  }
  ApResult out;
  for (int k = 0; k < classes; ++k) {
    std::vector<std::size_t> gt;
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
      if (ground_truth[i].cls == k) gt.push_back(i);
    }
    if (gt.empty()) {
      out.per_class.emplace_back();
      continue;
    }
    std::vector<std::size_t> preds;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      if (predictions[i].cls == k) preds.push_back(i);
    }
    std::stable_sort(preds.begin(), preds.end(), [&](std::size_t a, std::size_t b) {
      return predictions[a].confidence > predictions[b].confidence;
    });

    std::vector<bool> used(gt.size(), false);
    std::vector<double> scores;
    std::vector<bool> hit;
    for (std::size_t p : preds) {
      const DetectionSegment& pred = predictions[p];
      double best = -1.0;
      std::size_t best_j = gt.size();
      for (std::size_t j = 0; j < gt.size(); ++j) {
        const DetectionSegment& g = ground_truth[gt[j]];
        if (used[j] || g.video != pred.video) continue;
        const double iou = temporal_iou(pred, g);
        if (iou > best) {
          best = iou;
          best_j = j;
        }
      }
      const bool tp = best_j < gt.size() && best >= threshold;
      if (tp) used[best_j] = true;
      scores.push_back(pred.confidence);
      hit.push_back(tp);
    }
    out.per_class.emplace_back(average_precision(scores, hit, gt.size()));
  }
  out.map = mean_present(out.per_class);
  return out;
}

double EvalReport::event_map_at(double threshold) const {
  for (const EventResult& e : events) {
    if (std::abs(e.threshold - threshold) < 1e-12) return e.ap.map;
  }
  throw ConfigError("event mAP at IoU " + std::to_string(threshold) + " was not evaluated");
}

namespace {

nlohmann::json per_class_json(const ApResult& r) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    if (r.per_class[k]) j[std::to_string(k)] = *r.per_class[k];
  }
  return j;
}

std::string threshold_key(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["frame_map"] = frame.map;
  j["frame_ap"] = per_class_json(frame);
  nlohmann::json ev = nlohmann::json::object();
  for (const EventResult& e : events) {
    ev[threshold_key(e.threshold)] = {{"map", e.ap.map}, {"ap", per_class_json(e.ap)}};
  }
  j["event"] = ev;
  j["predictions"] = predictions;
  j["ground_truth"] = ground_truth;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::string out = "metric,class,value\n";
  char line[128];
  auto rows = [&](const std::string& metric, const ApResult& r) {
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
      if (!r.per_class[k]) continue;
      std::snprintf(line, sizeof line, "%s,%zu,%.17g\n", metric.c_str(), k, *r.per_class[k]);
      out += line;
    }
    std::snprintf(line, sizeof line, "%s,all,%.17g\n", metric.c_str(), r.map);
    out += line;
  };
  rows("frame_ap", frame);
  for (const EventResult& e : events) rows("event_ap@" + threshold_key(e.threshold), e.ap);
  std::snprintf(line, sizeof line, "predictions,all,%zu\nground_truth,all,%zu\n", predictions, ground_truth);
  out += line;
  return out;
}

void EvalReport::write(const std::filesystem::path& dir, const std::string& stem) const {
  core::write_file(dir / (stem + ".json"), to_json());
  core::write_file(dir / (stem + ".csv"), to_csv());
}

Matrix frame_probabilities(const model::TemporalFilterParams& params, const data::VideoSample& video,
                           data::Modality modality) {
  const model::FeatureSequence f = model::forward_features(params, video.features(modality), video.id);
  const Matrix logits = model::upsample_logits(model::classify(params, f), video.frames());
  return logits.unaryExpr([](double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  });
}

EvalReport evaluate_corpus(const model::TemporalFilterParams& params, const data::Corpus& corpus,
                           data::Modality modality, const EvalConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw DegenerateInputError("evaluate_corpus: empty corpus");
  const Eigen::Index classes = corpus.front().classes();
  Eigen::Index frames = 0;
  for (const data::VideoSample& v : corpus) {
    if (v.classes() != classes) throw StructuralError("videos disagree on the class count");
    frames += v.frames();
  }

  Matrix prob(frames, classes);
  data::LabelMatrix labels(frames, classes);
  std::vector<DetectionSegment> predictions, truth;
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const data::VideoSample& v = corpus[i];
    const Matrix p = frame_probabilities(params, v, modality);
    prob.middleRows(offset, v.frames()) = p;
    labels.middleRows(offset, v.frames()) = v.labels;
    offset += v.frames();
    for (const DetectionSegment& s : segments_from_scores(p, cfg, static_cast<int>(i))) predictions.push_back(s);
    for (const data::SegmentLabel& s : v.segments) truth.push_back({s.cls, s.start, s.end, 1.0, static_cast<int>(i)});
  }

  EvalReport report;
  report.frame = frame_map(prob, labels);
  for (double t : cfg.iou_thresholds) {
    report.events.push_back({t, event_map(predictions, truth, static_cast<int>(classes), t)});
  }
  report.predictions = predictions.size();
  report.ground_truth = truth.size();
  return report;
}

}  // namespace distill::eval
