#include <algorithm>
#include <charconv>
#include <limits>

#include "distill/core/binary_io.hpp"
#include "distill/data/dataset.hpp"

namespace distill::data {

namespace {

constexpr std::uint32_t kMaxDim = 1u << 24;

std::uint32_t checked_u32(Eigen::Index v, const char* what) {
  if (v < 0 || v > static_cast<Eigen::Index>(std::numeric_limits<std::uint32_t>::max())) {
    throw StructuralError(std::string("encode_features: ") + what + " out of range");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_features(const VideoSample& sample) {
  if (sample.modalities.empty()) throw StructuralError("encode_features: video has no modalities");
  const Eigen::Index steps = sample.snippets();
  const Eigen::Index din = sample.modalities.front().cols();
  for (const Matrix& m : sample.modalities) {
    if (m.rows() != steps || m.cols() != din) throw StructuralError("encode_features: modality shapes differ");
  }
  core::ByteWriter w;
  w.magic("DSF1");
  w.u32(checked_u32(static_cast<Eigen::Index>(sample.modalities.size()), "modality count"));
  w.u32(checked_u32(steps, "T"));
  w.u32(checked_u32(din, "Din"));
  w.u32(checked_u32(sample.labels.rows(), "Tgt"));
  w.u32(checked_u32(sample.labels.cols(), "K"));
  w.u32(checked_u32(sample.stride, "stride"));
  for (const Matrix& m : sample.modalities) {
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
  }
  for (Eigen::Index i = 0; i < sample.labels.size(); ++i) w.u8(sample.labels.data()[i]);
  w.u32(checked_u32(static_cast<Eigen::Index>(sample.segments.size()), "segment count"));
  for (const SegmentLabel& s : sample.segments) {
    w.u32(checked_u32(s.cls, "segment class"));
    w.u32(checked_u32(s.start, "segment start"));
    w.u32(checked_u32(s.end, "segment end"));
  }
  return w.bytes();
}

VideoSample decode_features(const std::string& bytes, std::uint32_t id) {
  core::ByteReader r(bytes);
  r.expect_magic("DSF1");
  const std::uint32_t modality_count = r.u32();
  const std::uint32_t steps = r.u32();
  const std::uint32_t din = r.u32();
  const std::uint32_t frames = r.u32();
  const std::uint32_t classes = r.u32();
  const std::size_t header_end = r.offset();
  const std::uint32_t stride = r.u32();

  if (modality_count == 0 || modality_count > 16) throw FormatError("invalid modality count", 4);
  if (steps < 2) throw FormatError("sequence length T=" + std::to_string(steps) + " violates T >= 2", 8);
  if (din == 0 || din > kMaxDim || steps > kMaxDim) throw FormatError("invalid feature dimensions", 12);
  if (classes == 0 || classes > 65536) throw FormatError("invalid class count", 20);
  if (stride == 0 || static_cast<std::uint64_t>(steps) * stride != frames) {
    throw FormatError("Tgt must equal T * stride", header_end);
  }

  VideoSample v;
  v.id = id;
  v.stride = static_cast<int>(stride);
  for (std::uint32_t m = 0; m < modality_count; ++m) {
    Matrix x(steps, din);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.f64();
    if (!x.allFinite()) throw FormatError("non-finite feature value", r.offset());
    v.modalities.push_back(std::move(x));
  }
  v.labels.resize(frames, classes);
  for (Eigen::Index i = 0; i < v.labels.size(); ++i) {
    const std::uint8_t b = r.u8();
    if (b > 1) throw FormatError("label byte must be 0 or 1", r.offset() - 1);
    v.labels.data()[i] = b;
  }
  const std::uint32_t segment_count = r.u32();
  for (std::uint32_t s = 0; s < segment_count; ++s) {
    SegmentLabel seg;
    seg.cls = static_cast<int>(r.u32());
    seg.start = static_cast<int>(r.u32());
    seg.end = static_cast<int>(r.u32());
    if (seg.cls < 0 || seg.cls >= static_cast<int>(classes) || seg.start < 0 || seg.start >= seg.end ||
        seg.end > static_cast<int>(frames)) {
      throw FormatError("segment " + std::to_string(s) + " out of range", r.offset() - 12);
    }
    v.segments.push_back(seg);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after segment list", r.offset());
  const LabelMatrix expected = dense_labels_from_segments(v.segments, static_cast<int>(frames), static_cast<int>(classes));
  if (!(expected.array() == v.labels.array()).all()) {
    throw FormatError("label matrix inconsistent with segment list", header_end);
  }
  return v;
}

void save_features(const std::filesystem::path& path, const VideoSample& sample) {
  core::write_file(path, encode_features(sample));
}

VideoSample load_features(const std::filesystem::path& path) {
  std::uint32_t id = 0;
  const std::string stem = path.stem().string();
  if (stem.rfind("video_", 0) == 0) {
    const char* first = stem.data() + 6;
    const char* last = stem.data() + stem.size();
    std::from_chars(first, last, id);
  }
  try {
    return decode_features(core::read_file(path), id);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::filesystem::path feature_path(const std::filesystem::path& dir, std::uint32_t id) {
  std::string name = std::to_string(id);
  name.insert(0, name.size() < 6 ? 6 - name.size() : 0, '0');
  return dir / ("video_" + name + ".dsf");
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  for (const VideoSample& v : corpus) save_features(feature_path(dir, v.id), v);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("corpus directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dsf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Corpus corpus;
  for (const auto& f : files) corpus.push_back(load_features(f));
  return corpus;
}

}  // namespace distill::data
