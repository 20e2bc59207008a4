#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "distill/data/dataset.hpp"
#include "distill/eval/metrics.hpp"
#include "distill/train/trainer.hpp"

namespace distill::cli {

struct Paths {
  std::filesystem::path corpus_dir = "out/corpus";
  std::filesystem::path checkpoint_dir = "out/checkpoints";
  std::filesystem::path report_dir = "out/reports";
};

struct RunConfig {
  data::SyntheticConfig synthetic;
  int test_videos = 100;
  train::TrainConfig train;
  data::Modality teacher_modality = data::Modality::kMotion;
  data::Modality student_modality = data::Modality::kAppearance;
  eval::EvalConfig eval;
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  Paths paths;

  void validate() const;
  /// Ids of the held-out test corpus start here, after the training ids.
  std::uint32_t test_first_id() const;
};

/// One "section.key" setting, parsed from text and printed back.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_key(const std::string& name);

/// Sets one key; ConfigError for unknown keys and unparsable values.
void apply_setting(RunConfig& cfg, const std::string& name, const std::string& value);

/// Reads an INI file ([section] / key = value) in order; unknown keys are rejected.
void apply_ini(RunConfig& cfg, const std::filesystem::path& path);

/// The whole configuration as INI text, every key present.
std::string to_ini(const RunConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace distill::cli
