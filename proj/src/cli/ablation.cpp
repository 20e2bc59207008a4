#include "distill/cli/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace distill::cli {

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Runs job(i) for i in [0, n) on up to `threads` workers; rethrows the
// first failure by index.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, threads));
  if (count == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(count, n); ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<AblationVariant> ablation_variants(const losses::LossWeights& full) {
  return {{"vanilla", {0.0, 0.0, 0.0}},
          {"atomic", {full.atomic, 0.0, 0.0}},
          {"global", {0.0, full.global, 0.0}},
          {"boundary", {0.0, 0.0, full.boundary}},
          {"full", full}};
}

double AblationRow::mean_frame_map() const { return mean(frame_map); }
double AblationRow::mean_event_map() const { return mean(event_map); }

const AblationRow& AblationTable::row(const std::string& name) const {
  for (const AblationRow& r : rows) {
    if (r.name == name) return r;
  }
  throw ConfigError("ablation table has no row \"" + name + "\"");
}

std::string AblationTable::to_csv() const {
  std::string out = "variant,alpha_atomic,alpha_global,alpha_boundary,seed,frame_map,event_map_0.5\n";
  char line[256];
  for (const AblationRow& r : rows) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      std::snprintf(line, sizeof line, "%s,%g,%g,%g,%llu,%.17g,%.17g\n", r.name.c_str(), r.weights.atomic,
                    r.weights.global, r.weights.boundary, static_cast<unsigned long long>(seeds[s]), r.frame_map[s],
                    r.event_map[s]);
      out += line;
    }
    std::snprintf(line, sizeof line, "%s,%g,%g,%g,mean,%.17g,%.17g\n", r.name.c_str(), r.weights.atomic,
                  r.weights.global, r.weights.boundary, r.mean_frame_map(), r.mean_event_map());
    out += line;
  }
  return out;
}

std::string AblationTable::to_text() const {
  std::string out = "variant     frame mAP   event mAP@0.5\n";
  char line[128];
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%-10s  %9.2f   %13.2f\n", r.name.c_str(), 100.0 * r.mean_frame_map(),
                  100.0 * r.mean_event_map());
    out += line;
  }
  return out;
}

AblationTable run_ablation(const RunConfig& cfg, int threads, const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  eval::EvalConfig eval_cfg = cfg.eval;
  if (std::none_of(eval_cfg.iou_thresholds.begin(), eval_cfg.iou_thresholds.end(),
                   [](double t) { return std::abs(t - 0.5) < 1e-12; })) {
    eval_cfg.iou_thresholds.push_back(0.5);
  }
  const std::vector<AblationVariant> variants = ablation_variants(cfg.train.weights);
  const std::size_t n_seeds = cfg.ablation_seeds.size();

  struct SeedData {
    data::Corpus train, test;
    train::TeacherModel teacher;
  };
  std::vector<SeedData> seeds(n_seeds);
  std::mutex log_mutex;
  auto report = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };

  parallel_for(n_seeds, threads, [&](std::size_t i) {
    const std::uint64_t seed = cfg.ablation_seeds[i];
    data::SyntheticConfig synth = cfg.synthetic;
    synth.seed = seed;
    seeds[i].train = data::generate_synthetic_corpus(synth);
    synth.first_id = cfg.test_first_id();
    synth.videos = cfg.test_videos;
    seeds[i].test = data::generate_synthetic_corpus(synth);
    train::TrainConfig tc = cfg.train;
    tc.seed = seed;
    seeds[i].teacher = {train::train_teacher(seeds[i].train, cfg.teacher_modality, tc).params, cfg.teacher_modality};
    report("seed " + std::to_string(seed) + ": teacher trained");
  });

  AblationTable table;
  table.seeds = cfg.ablation_seeds;
  for (const AblationVariant& v : variants) {
    table.rows.push_back({v.name, v.weights, std::vector<double>(n_seeds), std::vector<double>(n_seeds)});
  }
  parallel_for(n_seeds * variants.size(), threads, [&](std::size_t job) {
    const std::size_t s = job / variants.size(), v = job % variants.size();
    train::TrainConfig tc = cfg.train;
    tc.seed = cfg.ablation_seeds[s];
    tc.weights = variants[v].weights;
    const std::vector<train::TeacherModel> teachers{seeds[s].teacher};
    const train::TrainResult student = train::train_student(seeds[s].train, teachers, cfg.student_modality, tc);
    const eval::EvalReport r = eval::evaluate_corpus(student.params, seeds[s].test, cfg.student_modality, eval_cfg);
    table.rows[v].frame_map[s] = r.frame.map;
    table.rows[v].event_map[s] = r.event_map_at(0.5);
    char msg[160];
    std::snprintf(msg, sizeof msg, "seed %llu: %-8s frame mAP %.4f  event mAP@0.5 %.4f",
                  static_cast<unsigned long long>(tc.seed), variants[v].name.c_str(), r.frame.map,
                  r.event_map_at(0.5));
    report(msg);
  });
  return table;
}

int worker_threads_from_env() {
  const char* v = std::getenv("DISTILL_SEQ_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("DISTILL_SEQ_THREADS must be a positive integer, got \"") + v + "\"");
  return static_cast<int>(std::min<long>(n, 256));
}

}  // namespace distill::cli
