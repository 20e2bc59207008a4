#include "doctest.h"

#include <random>

#include "distill/eval/metrics.hpp"

using namespace distill;
using eval::DetectionSegment;
using eval::Matrix;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

data::LabelMatrix label_column(std::initializer_list<int> v) {
  data::LabelMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (int x : v) m(i++, 0) = static_cast<std::uint8_t>(x);
  return m;
}

}  // namespace

TEST_CASE("frame AP worked examples") {
  CHECK(eval::frame_map(column({0.9, 0.2, 0.8, 0.1}), label_column({1, 0, 1, 0})).map == 1.0);
  const double ap = eval::frame_map(column({0.9, 0.8, 0.2, 0.1}), label_column({1, 0, 1, 0})).map;
  CHECK(ap == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));

  data::LabelMatrix labels(5, 3);
  labels << 1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0;
  const auto r = eval::frame_map(labels.cast<double>(), labels);
  CHECK(r.map == 1.0);
  CHECK_FALSE(r.per_class[2].has_value());
  CHECK_THROWS_AS(eval::frame_map(Matrix::Zero(3, 1), label_column({0, 0, 0})), DegenerateInputError);
  CHECK_THROWS_AS(eval::frame_map(Matrix::Zero(3, 2), label_column({0, 1, 0})), StructuralError);
}

TEST_CASE("ties rank the lower frame first") {
  // Positive at index 1 ties with a negative at index 0: the negative ranks first.
  CHECK(eval::frame_map(column({0.5, 0.5}), label_column({0, 1})).map == 0.5);
  CHECK(eval::frame_map(column({0.5, 0.5}), label_column({1, 0})).map == 1.0);
}

TEST_CASE("AP is invariant under strictly increasing score maps") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix scores(40, 3);
  data::LabelMatrix labels(40, 3);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    scores.data()[i] = u(rng);
    labels.data()[i] = u(rng) < 0.3;
  }
  const double base = eval::frame_map(scores, labels).map;
  CHECK(eval::frame_map(scores.array().exp().matrix(), labels).map == base);
  CHECK(eval::frame_map((3.0 * scores.array() - 1.0).matrix(), labels).map == base);
  CHECK(eval::frame_map(scores.array().cube().matrix(), labels).map == base);
}

TEST_CASE("segments from scores") {
  eval::EvalConfig cfg;
  CHECK(eval::segments_from_scores(Matrix::Zero(7, 2), cfg).empty());
  const Matrix p = column({0, 1, 1, 0, 1, 1, 0});
  cfg.max_gap = 1;
  cfg.min_duration = 2;
  const auto merged = eval::segments_from_scores(p, cfg);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].start == 1);
  CHECK(merged[0].end == 6);
  CHECK(merged[0].confidence == doctest::Approx(0.8).epsilon(1e-15));
  cfg.max_gap = 0;
  const auto split = eval::segments_from_scores(p, cfg);
  REQUIRE(split.size() == 2);
  CHECK(split[0].start == 1);
  CHECK(split[0].end == 3);
  CHECK(split[1].start == 4);
  CHECK(split[1].end == 6);
  cfg.min_duration = 3;
  CHECK(eval::segments_from_scores(p, cfg).empty());
}

TEST_CASE("segments invert dense labels with no gap and unit duration") {
  std::mt19937_64 rng(5);
  eval::EvalConfig cfg;
  cfg.max_gap = 0;
  cfg.min_duration = 1;
  for (int trial = 0; trial < 50; ++trial) {
    const int frames = 5 + trial % 40, classes = 1 + trial % 4;
    std::vector<data::SegmentLabel> segs;
    for (int k = 0; k < classes; ++k) {
      int t = std::uniform_int_distribution<int>(0, 3)(rng);
      while (t < frames) {
        const int len = std::uniform_int_distribution<int>(1, 6)(rng);
        const int end = std::min(frames, t + len);
        segs.push_back({k, t, end});
        t = end + std::uniform_int_distribution<int>(1, 5)(rng);
      }
    }
    const auto labels = data::dense_labels_from_segments(segs, frames, classes);
    const auto found = eval::segments_from_scores(labels.cast<double>(), cfg);
    REQUIRE(found.size() == segs.size());
    auto sorted = segs;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return std::tie(a.cls, a.start) < std::tie(b.cls, b.start);
    });
    for (std::size_t i = 0; i < found.size(); ++i) {
      CHECK(found[i].cls == sorted[i].cls);
      CHECK(found[i].start == sorted[i].start);
      CHECK(found[i].end == sorted[i].end);
      CHECK(found[i].confidence == 1.0);
    }
  }
}

TEST_CASE("temporal IoU") {
  const DetectionSegment a{0, 10, 20}, b{0, 15, 25}, c{0, 30, 40};
  CHECK(eval::temporal_iou(a, a) == 1.0);
  CHECK(eval::temporal_iou(a, c) == 0.0);
  CHECK(eval::temporal_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(eval::temporal_iou(a, b) == eval::temporal_iou(b, a));
  CHECK(eval::temporal_iou({0, 0, 5}, {0, 5, 9}) == 0.0);
}

TEST_CASE("event AP worked examples") {
  const std::vector<DetectionSegment> gt{{0, 0, 10}};
  const std::vector<DetectionSegment> half{{0, 0, 5, 0.9}};
  CHECK(eval::event_map(half, gt, 1, 0.5).map == 1.0);
  CHECK(eval::event_map(half, gt, 1, 0.6).map == 0.0);
  const std::vector<DetectionSegment> exact{{0, 0, 10, 0.7}, {1, 3, 8, 0.4}};
  const std::vector<DetectionSegment> truth{{0, 0, 10}, {1, 3, 8}};
  for (double t : {0.1, 0.3, 0.5, 1.0}) CHECK(eval::event_map(exact, truth, 2, t).map == 1.0);
  CHECK_THROWS_AS(eval::event_map(exact, truth, 2, 0.0), ConfigError);
  CHECK_THROWS_AS(eval::event_map(exact, truth, 2, 1.5), ConfigError);
}

TEST_CASE("a duplicate correct prediction never raises AP above one") {
  const std::vector<DetectionSegment> truth{{0, 2, 9}};
  const std::vector<DetectionSegment> dup{{0, 2, 9, 0.9}, {0, 2, 9, 0.8}};
  const double ap = eval::event_map(dup, truth, 1, 0.5).map;
  CHECK(ap == 1.0);
  const std::vector<DetectionSegment> dup_first{{0, 2, 9, 0.8}, {0, 2, 9, 0.9}, {0, 0, 1, 0.95}};
  CHECK(eval::event_map(dup_first, truth, 1, 0.5).map <= 1.0);
}

TEST_CASE("matching stays inside one video") {
  const std::vector<DetectionSegment> truth{{0, 0, 10, 1.0, 0}};
  const std::vector<DetectionSegment> elsewhere{{0, 0, 10, 0.9, 1}};
  CHECK(eval::event_map(elsewhere, truth, 1, 0.5).map == 0.0);
}

TEST_CASE("evaluation config validation") {
  eval::EvalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.iou_thresholds = {0.5, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_gap = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("report serialization") {
  eval::EvalReport r;
  r.frame.per_class = {0.5, std::nullopt, 1.0};
  r.frame.map = 0.75;
  r.events.push_back({0.5, {{1.0, std::nullopt, 0.0}, 0.5}});
  r.predictions = 3;
  r.ground_truth = 2;
  const std::string json = r.to_json();
  CHECK(json.find("\"frame_map\": 0.75") != std::string::npos);
  CHECK(json.find("\"1\"") == std::string::npos);
  CHECK(json.find("\"0.5\"") != std::string::npos);
  const std::string csv = r.to_csv();
  CHECK(csv.find("frame_ap,all,0.75") != std::string::npos);
  CHECK(csv.find("event_ap@0.5,0,1") != std::string::npos);
  CHECK(r.event_map_at(0.5) == 0.5);
  CHECK_THROWS_AS(r.event_map_at(0.3), ConfigError);
}

TEST_CASE("corpus evaluation upsamples to frame resolution") {
  data::SyntheticConfig sc;
  sc.videos = 4;
  sc.input_dim = 5;
  sc.classes = 3;
  sc.min_snippets = 10;
  sc.max_snippets = 12;
  sc.min_segment_len = 2;
  sc.max_segment_len = 4;
  sc.stride = 3;
  const auto corpus = data::generate_synthetic_corpus(sc);
  const auto params = model::init_params(0, {5, 4, 3, 2});
  const auto report = eval::evaluate_corpus(params, corpus, data::Modality::kAppearance, {});
  CHECK(report.frame.map >= 0.0);
  CHECK(report.frame.map <= 1.0);
  CHECK(report.events.size() == 3);
  const Matrix p = eval::frame_probabilities(params, corpus[0], data::Modality::kAppearance);
  CHECK(p.rows() == corpus[0].frames());
  CHECK((p.array() > 0.0).all());
  CHECK((p.array() < 1.0).all());
}
