#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "distill/cli/config.hpp"

namespace distill::cli {

struct AblationVariant {
  std::string name;
  losses::LossWeights weights;
};

/// vanilla, atomic, global, boundary, full; single-term rows keep their
/// weight from `full`.
std::vector<AblationVariant> ablation_variants(const losses::LossWeights& full);

struct AblationRow {
  std::string name;
  losses::LossWeights weights;
  std::vector<double> frame_map;   // per seed, in [0, 1]
  std::vector<double> event_map;   // per seed, at IoU 0.5
  double mean_frame_map() const;
  double mean_event_map() const;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& name) const;
  std::string to_csv() const;
  /// Plain-text table with mAP in percentage points.
  std::string to_text() const;
};

/// Per seed: generate the training and test corpora, train the teacher,
/// then every variant's student, and evaluate the students on the test
/// corpus. Jobs run on up to `threads` workers; results do not depend on it.
AblationTable run_ablation(const RunConfig& cfg, int threads = 1,
                           const std::function<void(const std::string&)>& progress = {});

/// DISTILL_SEQ_THREADS, default 1.
int worker_threads_from_env();

}  // namespace distill::cli
