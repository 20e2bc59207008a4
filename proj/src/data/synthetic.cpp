#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <tuple>

#include "distill/data/dataset.hpp"

namespace distill::data {

const char* to_string(Modality m) noexcept {
  switch (m) {
    case Modality::kAppearance: return "appearance";
    case Modality::kMotion: return "motion";
    case Modality::kPose: return "pose";
  }
  return "unknown";
}

Modality parse_modality(const std::string& name) {
  if (name == "appearance" || name == "rgb") return Modality::kAppearance;
  if (name == "motion" || name == "flow") return Modality::kMotion;
  if (name == "pose") return Modality::kPose;
  throw ConfigError("unknown modality \"" + name + "\" (expected appearance, motion or pose)");
}

const Matrix& VideoSample::features(Modality m) const {
  const auto i = static_cast<std::size_t>(m);
  if (i >= modalities.size()) {
    throw StructuralError(std::string("video ") + std::to_string(id) + " has no " + to_string(m) + " modality");
  }
  return modalities[i];
}

std::vector<int> VideoSample::class_set() const {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < labels.cols(); ++k) {
    if ((labels.col(k).array() != 0).any()) out.push_back(static_cast<int>(k));
  }
  return out;
}

Matrix VideoSample::snippet_labels() const {
  const Eigen::Index steps = snippets();
  Matrix out(steps, labels.cols());
  for (Eigen::Index t = 0; t < steps; ++t) {
    out.row(t) = labels.row(t * stride + stride / 2).cast<double>();
  }
  return out;
}

bool VideoSample::operator==(const VideoSample& other) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
  };
  if (id != other.id || stride != other.stride || segments != other.segments) return false;
  if (modalities.size() != other.modalities.size() || !same(labels, other.labels)) return false;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    if (!same(modalities[m], other.modalities[m])) return false;
  }
  return true;
}

std::size_t total_snippets(const Corpus& corpus) {
  std::size_t n = 0;
  for (const VideoSample& v : corpus) n += static_cast<std::size_t>(v.snippets());
  return n;
}

LabelMatrix dense_labels_from_segments(const std::vector<SegmentLabel>& segments, int length, int classes) {
  if (length < 0 || classes <= 0) throw StructuralError("dense_labels_from_segments: invalid dimensions");
  LabelMatrix out = LabelMatrix::Zero(length, classes);
  for (const SegmentLabel& s : segments) {
    if (s.cls < 0 || s.cls >= classes || s.start < 0 || s.start >= s.end || s.end > length) {
      throw StructuralError("segment (class " + std::to_string(s.cls) + ", [" + std::to_string(s.start) + ", " +
                            std::to_string(s.end) + ")) out of range for length " + std::to_string(length));
    }
    out.block(s.start, s.cls, s.end - s.start, 1).setOnes();
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (videos < 0) throw ConfigError("videos must be >= 0");
  if (classes < 2) throw ConfigError("synthetic corpora need K >= 2");
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (min_snippets < 2 || max_snippets < min_snippets) throw ConfigError("snippet range must satisfy 2 <= min <= max");
  if (min_segments < 0 || max_segments < min_segments) throw ConfigError("segment count range is invalid");
  if (min_segment_len < 1 || max_segment_len < min_segment_len) throw ConfigError("segment length range is invalid");
  if (min_segment_len > min_snippets) {
    throw ConfigError("min_segment_len " + std::to_string(min_segment_len) + " exceeds the shortest video (" +
                      std::to_string(min_snippets) + " snippets)");
  }
  if (stride < 1) throw ConfigError("stride must be >= 1");
  for (double s : {class_scale, noise_scale, drift_scale, pulse_amplitude}) {
    if (!std::isfinite(s) || s < 0.0) throw ConfigError("generator scales must be finite and >= 0");
  }
  if (!(overlap_probability >= 0.0 && overlap_probability <= 1.0)) {
    throw ConfigError("overlap_probability must lie in [0, 1]");
  }
}

namespace {

constexpr std::uint64_t kWorldStream = 0x5eedc1a55ULL;

struct ClassWorld {
  std::vector<Matrix> embeddings;  // per modality, K x Din
  Matrix pulses;                   // K x Din, unit RMS per row
};

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * dist(rng);
  return m;
}

ClassWorld make_world(const SyntheticConfig& cfg) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(kWorldStream)};
  std::mt19937_64 rng(seq);
  ClassWorld w;
  const int modality_count = cfg.pose_modality ? 3 : 2;
  for (int m = 0; m < modality_count; ++m) w.embeddings.push_back(gaussian(rng, cfg.classes, cfg.input_dim, cfg.class_scale));
  w.pulses = gaussian(rng, cfg.classes, cfg.input_dim, 1.0);
  for (Eigen::Index k = 0; k < w.pulses.rows(); ++k) {
    w.pulses.row(k) /= std::sqrt(w.pulses.row(k).squaredNorm() / static_cast<double>(cfg.input_dim));
  }
  return w;
}

// Segments at snippet resolution. Same-class segments never touch; segments
// of different classes overlap only when the overlap draw allows it.
std::vector<SegmentLabel> sample_segments(const SyntheticConfig& cfg, int steps, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(cfg.min_segments, cfg.max_segments);
  std::uniform_int_distribution<int> class_dist(0, cfg.classes - 1);
  std::bernoulli_distribution overlap_dist(cfg.overlap_probability);
  const int count = count_dist(rng);
  std::vector<SegmentLabel> out;
  for (int s = 0; s < count; ++s) {
    const int cls = class_dist(rng);
    const bool may_overlap = overlap_dist(rng);
    std::uniform_int_distribution<int> len_dist(cfg.min_segment_len, std::min(cfg.max_segment_len, steps));
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int len = len_dist(rng);
      std::uniform_int_distribution<int> start_dist(0, steps - len);
      const SegmentLabel cand{cls, start_dist(rng), 0};
      const int end = cand.start + len;
      const bool ok = std::none_of(out.begin(), out.end(), [&](const SegmentLabel& o) {
        if (o.cls == cls) return cand.start <= o.end && o.start <= end;  // touching counts
        return !may_overlap && cand.start < o.end && o.start < end;
      });
      if (ok) {
        out.push_back({cls, cand.start, end});
        break;
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const SegmentLabel& a, const SegmentLabel& b) {
    return std::tie(a.start, a.end, a.cls) < std::tie(b.start, b.end, b.cls);
  });
  return out;
}

VideoSample make_video(const SyntheticConfig& cfg, const ClassWorld& world, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), id};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> len_dist(cfg.min_snippets, cfg.max_snippets);
  const int steps = len_dist(rng);
  const std::vector<SegmentLabel> segs = sample_segments(cfg, steps, rng);
  const LabelMatrix active = dense_labels_from_segments(segs, steps, cfg.classes);
  const Matrix activity = active.cast<double>();

  VideoSample v;
  v.id = id;
  v.stride = cfg.stride;
  for (const SegmentLabel& s : segs) v.segments.push_back({s.cls, s.start * cfg.stride, s.end * cfg.stride});
  v.labels = dense_labels_from_segments(v.segments, steps * cfg.stride, cfg.classes);

  // Appearance: class content + one slow sinusoidal drift + noise.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double period = static_cast<double>(steps) * (0.5 + 1.5 * unit(rng));
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const Matrix direction = gaussian(rng, 1, cfg.input_dim, 1.0);
  Matrix appearance = activity * world.embeddings[0] + gaussian(rng, steps, cfg.input_dim, cfg.noise_scale);
  for (int t = 0; t < steps; ++t) {
    appearance.row(t) += cfg.drift_scale * std::sin(2.0 * std::numbers::pi * t / period + phase) * direction;
  }

  // Motion: class content + pulses on every segment's first and last snippet + noise.
  Matrix motion = activity * world.embeddings[1] + gaussian(rng, steps, cfg.input_dim, cfg.noise_scale);
  for (const SegmentLabel& s : segs) {
    motion.row(s.start) += cfg.pulse_amplitude * world.pulses.row(s.cls);
    if (s.end - 1 != s.start) motion.row(s.end - 1) += cfg.pulse_amplitude * world.pulses.row(s.cls);
  }

  v.modalities.push_back(std::move(appearance));
  v.modalities.push_back(std::move(motion));
  if (cfg.pose_modality) {
    v.modalities.push_back(activity * world.embeddings[2] + gaussian(rng, steps, cfg.input_dim, cfg.noise_scale));
  }
  return v;
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
  cfg.validate();
  const ClassWorld world = make_world(cfg);
  Corpus corpus;
  corpus.reserve(static_cast<std::size_t>(cfg.videos));
  for (int i = 0; i < cfg.videos; ++i) corpus.push_back(make_video(cfg, world, cfg.first_id + static_cast<std::uint32_t>(i)));
  return corpus;
}

}  // namespace distill::data
