#include "distill/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace distill::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(const std::string& name, const std::string& text) {
  const std::string t = trim(text);
  Int value{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(name + ": expected an integer, got \"" + text + "\"");
  }
  return value;
}

double parse_double(const std::string& name, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double value = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw ConfigError(name + ": expected a number, got \"" + text + "\"");
  return value;
}

bool parse_bool(const std::string& name, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(name + ": expected true or false, got \"" + text + "\"");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  const auto result = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, result.ptr);
}

template <typename Field>
ConfigKey int_key(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [name, field](RunConfig& c, const std::string& v) {
            auto& ref = field(c);
            ref = parse_int<std::remove_reference_t<decltype(ref)>>(name, v);
          },
          [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
ConfigKey double_key(std::string name, std::string help, Field field) {
  return {name, std::move(help), [name, field](RunConfig& c, const std::string& v) { field(c) = parse_double(name, v); },
          [field](const RunConfig& c) { return format_double(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
ConfigKey bool_key(std::string name, std::string help, Field field) {
  return {name, std::move(help), [name, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); },
          [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Field>
ConfigKey path_key(std::string name, std::string help, Field field) {
  return {name, std::move(help), [field](RunConfig& c, const std::string& v) { field(c) = trim(v); },
          [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)).string(); }};
}

template <typename Field>
ConfigKey modality_key(std::string name, std::string help, Field field) {
  return {name, std::move(help),
          [field](RunConfig& c, const std::string& v) { field(c) = data::parse_modality(trim(v)); },
          [field](const RunConfig& c) { return std::string(data::to_string(field(const_cast<RunConfig&>(c)))); }};
}

std::vector<ConfigKey> build_keys() {
  // clang-format off
  std::vector<ConfigKey> k{
    int_key("synthetic.seed", "generator seed", [](RunConfig& c) -> auto& { return c.synthetic.seed; }),
    int_key("synthetic.videos", "training videos", [](RunConfig& c) -> auto& { return c.synthetic.videos; }),
    int_key("synthetic.test_videos", "held-out test videos", [](RunConfig& c) -> auto& { return c.test_videos; }),
    int_key("synthetic.classes", "number of classes K", [](RunConfig& c) -> auto& { return c.synthetic.classes; }),
    int_key("synthetic.input_dim", "feature dimension Din", [](RunConfig& c) -> auto& { return c.synthetic.input_dim; }),
    int_key("synthetic.min_snippets", "shortest video", [](RunConfig& c) -> auto& { return c.synthetic.min_snippets; }),
    int_key("synthetic.max_snippets", "longest video", [](RunConfig& c) -> auto& { return c.synthetic.max_snippets; }),
    int_key("synthetic.min_segments", "fewest segments per video", [](RunConfig& c) -> auto& { return c.synthetic.min_segments; }),
    int_key("synthetic.max_segments", "most segments per video", [](RunConfig& c) -> auto& { return c.synthetic.max_segments; }),
    int_key("synthetic.min_segment_len", "shortest segment (snippets)", [](RunConfig& c) -> auto& { return c.synthetic.min_segment_len; }),
    int_key("synthetic.max_segment_len", "longest segment (snippets)", [](RunConfig& c) -> auto& { return c.synthetic.max_segment_len; }),
    int_key("synthetic.stride", "frames per snippet", [](RunConfig& c) -> auto& { return c.synthetic.stride; }),
    double_key("synthetic.class_scale", "class embedding std", [](RunConfig& c) -> auto& { return c.synthetic.class_scale; }),
    double_key("synthetic.noise_scale", "snippet noise std", [](RunConfig& c) -> auto& { return c.synthetic.noise_scale; }),
    double_key("synthetic.drift_scale", "appearance drift amplitude", [](RunConfig& c) -> auto& { return c.synthetic.drift_scale; }),
    double_key("synthetic.pulse_amplitude", "motion boundary pulse RMS", [](RunConfig& c) -> auto& { return c.synthetic.pulse_amplitude; }),
    double_key("synthetic.overlap_probability", "chance a segment may overlap others", [](RunConfig& c) -> auto& { return c.synthetic.overlap_probability; }),
    bool_key("synthetic.pose_modality", "also emit a pose stream", [](RunConfig& c) -> auto& { return c.synthetic.pose_modality; }),

    int_key("train.epochs", "training epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }),
    int_key("train.batch_size", "videos per batch B", [](RunConfig& c) -> auto& { return c.train.batch_size; }),
    int_key("train.negatives", "negatives per positive N", [](RunConfig& c) -> auto& { return c.train.negatives; }),
    double_key("train.learning_rate", "initial Adam step size", [](RunConfig& c) -> auto& { return c.train.learning_rate; }),
    double_key("train.plateau_factor", "learning-rate reduction factor", [](RunConfig& c) -> auto& { return c.train.plateau_factor; }),
    int_key("train.patience", "plateau patience (epochs)", [](RunConfig& c) -> auto& { return c.train.patience; }),
    double_key("train.plateau_threshold", "minimum improvement", [](RunConfig& c) -> auto& { return c.train.plateau_threshold; }),
    double_key("train.alpha_atomic", "weight of the snippet term", [](RunConfig& c) -> auto& { return c.train.weights.atomic; }),
    double_key("train.alpha_global", "weight of the covariance term", [](RunConfig& c) -> auto& { return c.train.weights.global; }),
    double_key("train.alpha_boundary", "weight of the variation term", [](RunConfig& c) -> auto& { return c.train.weights.boundary; }),
    {"train.global_mode", "mean or sum over covariance entries",
     [](RunConfig& c, const std::string& v) {
       const std::string t = trim(v);
       if (t == "mean") c.train.global_mode = losses::GlobalMode::kMean;
       else if (t == "sum") c.train.global_mode = losses::GlobalMode::kSum;
       else throw ConfigError("train.global_mode: expected mean or sum, got \"" + v + "\"");
     },
     [](const RunConfig& c) { return std::string(c.train.global_mode == losses::GlobalMode::kMean ? "mean" : "sum"); }},
    {"train.variation_mode", "per-step or scalar variation signal",
     [](RunConfig& c, const std::string& v) {
       const std::string t = trim(v);
       if (t == "per-step") c.train.variation_mode = losses::VariationMode::kPerStep;
       else if (t == "scalar") c.train.variation_mode = losses::VariationMode::kScalar;
       else throw ConfigError("train.variation_mode: expected per-step or scalar, got \"" + v + "\"");
     },
     [](const RunConfig& c) {
       return std::string(c.train.variation_mode == losses::VariationMode::kPerStep ? "per-step" : "scalar");
     }},
    double_key("train.temperature", "snippet similarity temperature", [](RunConfig& c) -> auto& { return c.train.temperature; }),
    bool_key("train.normalize", "L2-normalize snippets in the snippet term", [](RunConfig& c) -> auto& { return c.train.normalize; }),
    double_key("train.phi", "negative ratio; <= 0 derives N / corpus snippets", [](RunConfig& c) -> auto& { return c.train.phi; }),
    int_key("train.channels", "hidden channels C", [](RunConfig& c) -> auto& { return c.train.channels; }),
    int_key("train.layers", "residual layers L", [](RunConfig& c) -> auto& { return c.train.layers; }),
    int_key("train.seed", "initialization and batching seed", [](RunConfig& c) -> auto& { return c.train.seed; }),
    double_key("train.validation_fraction", "held-out share of training videos", [](RunConfig& c) -> auto& { return c.train.validation_fraction; }),
    bool_key("train.record_wall_time", "log real epoch durations", [](RunConfig& c) -> auto& { return c.train.record_wall_time; }),
    modality_key("train.teacher_modality", "teacher input stream", [](RunConfig& c) -> auto& { return c.teacher_modality; }),
    modality_key("train.student_modality", "student input stream", [](RunConfig& c) -> auto& { return c.student_modality; }),

    {"eval.iou_thresholds", "comma-separated IoU thresholds",
     [](RunConfig& c, const std::string& v) {
       c.eval.iou_thresholds.clear();
       for (const std::string& item : split_list(v)) c.eval.iou_thresholds.push_back(parse_double("eval.iou_thresholds", item));
     },
     [](const RunConfig& c) {
       std::string out;
       for (double t : c.eval.iou_thresholds) out += (out.empty() ? "" : ",") + format_double(t);
       return out;
     }},
    double_key("eval.binarize_threshold", "probability threshold for segments", [](RunConfig& c) -> auto& { return c.eval.binarize_threshold; }),
    int_key("eval.max_gap", "largest gap merged into one segment", [](RunConfig& c) -> auto& { return c.eval.max_gap; }),
    int_key("eval.min_duration", "shortest kept segment", [](RunConfig& c) -> auto& { return c.eval.min_duration; }),

    {"ablate.seeds", "comma-separated ablation seeds",
     [](RunConfig& c, const std::string& v) { c.ablation_seeds = parse_seed_list(v); },
     [](const RunConfig& c) {
       std::string out;
       for (std::uint64_t s : c.ablation_seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
       return out;
     }},

    path_key("paths.corpus_dir", "feature files", [](RunConfig& c) -> auto& { return c.paths.corpus_dir; }),
    path_key("paths.checkpoint_dir", "checkpoints", [](RunConfig& c) -> auto& { return c.paths.checkpoint_dir; }),
    path_key("paths.report_dir", "logs, reports and plots", [](RunConfig& c) -> auto& { return c.paths.report_dir; }),
  };
  // clang-format on
  return k;
}

}  // namespace

void RunConfig::validate() const {
  synthetic.validate();
  if (test_videos < 0) throw ConfigError("synthetic.test_videos must be >= 0");
  train.validate();
  eval.validate();
  if (teacher_modality == student_modality) throw ConfigError("teacher and student must use different modalities");
  if (!synthetic.pose_modality && (teacher_modality == data::Modality::kPose || student_modality == data::Modality::kPose)) {
    throw ConfigError("pose modality requested but synthetic.pose_modality is false");
  }
  if (ablation_seeds.empty()) throw ConfigError("ablate.seeds must list at least one seed");
  for (const auto* p : {&paths.corpus_dir, &paths.checkpoint_dir, &paths.report_dir}) {
    if (p->empty()) throw ConfigError("paths must not be empty");
  }
}

std::uint32_t RunConfig::test_first_id() const {
  return synthetic.first_id + static_cast<std::uint32_t>(synthetic.videos);
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

const ConfigKey* find_key(const std::string& name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void apply_setting(RunConfig& cfg, const std::string& name, const std::string& value) {
  const ConfigKey* key = find_key(name);
  if (!key) throw ConfigError("unknown configuration key \"" + name + "\"");
  key->set(cfg, value);
}

void apply_ini(RunConfig& cfg, const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw IoError("cannot read config " + path.string());
    throw ConfigError("config " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config " + path.string() + ": key \"" + section + "\" outside any section");
    for (const auto& [key, value] : body) apply_setting(cfg, section + "." + key, value.data());
  }
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const ConfigKey& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(text)) out.push_back(parse_int<std::uint64_t>("seeds", item));
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

}  // namespace distill::cli
