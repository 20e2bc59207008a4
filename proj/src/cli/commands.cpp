#include "distill/cli/commands.hpp"

#include <cstdio>
#include <map>
#include <ostream>

#include "CLI11.hpp"

#include "distill/cli/ablation.hpp"
#include "distill/cli/config.hpp"
#include "distill/cli/plots.hpp"
#include "distill/core/binary_io.hpp"
#include "distill/diagnostics/gradcheck_suite.hpp"

namespace distill::cli {

namespace {

namespace fs = std::filesystem;

fs::path train_dir(const RunConfig& c) { return c.paths.corpus_dir / "train"; }
fs::path test_dir(const RunConfig& c) { return c.paths.corpus_dir / "test"; }
fs::path teacher_checkpoint(const RunConfig& c) { return c.paths.checkpoint_dir / "teacher.dsq"; }
fs::path student_checkpoint(const RunConfig& c) { return c.paths.checkpoint_dir / "student.dsq"; }

data::Corpus load_nonempty(const fs::path& dir) {
  data::Corpus corpus = data::load_corpus(dir);
  if (corpus.empty()) throw IoError("no feature files in " + dir.string() + " (run gen-data first)");
  return corpus;
}

int gen_data(const RunConfig& cfg, std::ostream& out) {
  data::SyntheticConfig synth = cfg.synthetic;
  const data::Corpus train = data::generate_synthetic_corpus(synth);
  synth.first_id = cfg.test_first_id();
  synth.videos = cfg.test_videos;
  const data::Corpus test = data::generate_synthetic_corpus(synth);
  data::save_corpus(train_dir(cfg), train);
  data::save_corpus(test_dir(cfg), test);
  out << "wrote " << train.size() << " training and " << test.size() << " test videos under "
      << cfg.paths.corpus_dir.string() << "\n";
  return 0;
}

void report_training(const train::TrainResult& r, const std::string& who, std::ostream& out) {
  const auto& last = r.log.rows.back();
  out << who << ": " << r.log.rows.size() << " epochs, best epoch " << r.best_epoch << ", final l_total "
      << last.total << ", val_loss " << last.val_loss << "\n";
}

int train_teacher_cmd(const RunConfig& cfg, std::ostream& out) {
  const data::Corpus corpus = load_nonempty(train_dir(cfg));
  const train::TrainResult r = train::train_teacher(corpus, cfg.teacher_modality, cfg.train);
  model::save_checkpoint(teacher_checkpoint(cfg), r.params);
  r.log.write_csv(cfg.paths.report_dir / "teacher_log.csv");
  if (!r.log.rows.empty()) {
    emit_plots(r.log, nullptr, nullptr, cfg.paths.report_dir / "plots", "teacher");
    report_training(r, "teacher", out);
  }
  out << "checkpoint " << teacher_checkpoint(cfg).string() << "\n";
  return 0;
}

int train_student_cmd(const RunConfig& cfg, const fs::path& teacher_path, std::ostream& out) {
  const data::Corpus corpus = load_nonempty(train_dir(cfg));
  const std::vector<train::TeacherModel> teachers{
      {model::load_checkpoint(teacher_path, model::Role::kTeacher), cfg.teacher_modality}};
  const train::TrainResult r = train::train_student(corpus, teachers, cfg.student_modality, cfg.train);
  for (const auto& row : r.log.rows) {
    if (row.teacher_grad_max != 0.0 || !row.teachers_unchanged) {
      throw NumericalError("teacher parameters moved during student training (epoch " + std::to_string(row.epoch) + ")");
    }
  }
  model::save_checkpoint(student_checkpoint(cfg), r.params);
  r.log.write_csv(cfg.paths.report_dir / "student_log.csv");
  if (!r.log.rows.empty()) {
    emit_plots(r.log, nullptr, nullptr, cfg.paths.report_dir / "plots", "student");
    report_training(r, "student", out);
  }
  out << "checkpoint " << student_checkpoint(cfg).string() << "\n";
  return 0;
}

void print_report(const eval::EvalReport& r, const std::string& who, std::ostream& out) {
  char line[128];
  std::snprintf(line, sizeof line, "%s: frame mAP %.4f", who.c_str(), r.frame.map);
  out << line;
  for (const auto& e : r.events) {
    std::snprintf(line, sizeof line, "  event mAP@%g %.4f", e.threshold, e.ap.map);
    out << line;
  }
  out << "  (" << r.predictions << " predictions, " << r.ground_truth << " ground-truth segments)\n";
}

int evaluate_cmd(const RunConfig& cfg, const fs::path& checkpoint, const std::string& modality_name,
                 const fs::path& compare, const std::string& compare_modality, std::ostream& out) {
  const data::Corpus test = load_nonempty(test_dir(cfg));
  const data::Modality modality = modality_name.empty() ? cfg.student_modality : data::parse_modality(modality_name);
  const eval::EvalReport report =
      eval::evaluate_corpus(model::load_checkpoint(checkpoint), test, modality, cfg.eval);
  report.write(cfg.paths.report_dir, "eval");
  print_report(report, checkpoint.filename().string(), out);
  if (!compare.empty()) {
    const data::Modality other = compare_modality.empty() ? modality : data::parse_modality(compare_modality);
    const eval::EvalReport baseline = eval::evaluate_corpus(model::load_checkpoint(compare), test, other, cfg.eval);
    baseline.write(cfg.paths.report_dir, "eval_baseline");
    print_report(baseline, compare.filename().string(), out);
    emit_ap_difference(report, baseline, cfg.paths.report_dir / "plots");
  }
  return 0;
}

int ablate_cmd(const RunConfig& cfg, std::ostream& out) {
  const AblationTable table =
      run_ablation(cfg, worker_threads_from_env(), [&out](const std::string& msg) { out << msg << "\n" << std::flush; });
  core::write_file(cfg.paths.report_dir / "ablation.csv", table.to_csv());
  core::write_file(cfg.paths.report_dir / "ablation.txt", table.to_text());
  out << table.to_text();
  return 0;
}

int gradcheck_cmd(std::ostream& out) {
  bool ok = true;
  for (const auto& r : diagnostics::run_gradcheck_suites()) {
    char line[160];
    std::snprintf(line, sizeof line, "%-24s seeds %2d  max rel error %.3e  %s\n", r.name.c_str(), r.seeds,
                  r.max_error, r.passed ? "ok" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  if (!ok) throw NumericalError("gradient check failed");
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-modal distillation for frame-level action detection on synthetic feature streams",
               "distill_seq"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  std::map<std::string, std::string> overrides;
  for (const ConfigKey& key : config_keys()) {
    app.add_option_function<std::string>(
           "--" + key.name, [&overrides, name = key.name](const std::string& v) { overrides[name] = v; }, key.help)
        ->type_name(key.name.substr(key.name.find('.') + 1) == "seeds" ? "LIST" : "VALUE");
  }

  auto* gen = app.add_subcommand("gen-data", "generate training and test feature files")->fallthrough();
  auto* teacher = app.add_subcommand("train-teacher", "train the teacher on its modality")->fallthrough();
  auto* student = app.add_subcommand("train-student", "distill the frozen teacher into a student")->fallthrough();
  std::string teacher_path;
  student->add_option("--teacher", teacher_path, "teacher checkpoint (default <checkpoint_dir>/teacher.dsq)");
  auto* evaluate = app.add_subcommand("evaluate", "frame and event mAP on the test corpus")->fallthrough();
  std::string checkpoint, modality, compare, compare_modality;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint (default <checkpoint_dir>/student.dsq)");
  evaluate->add_option("--modality", modality, "input stream of the checkpoint (default: student modality)");
  evaluate->add_option("--compare", compare, "second checkpoint; writes per-class AP differences");
  evaluate->add_option("--compare-modality", compare_modality, "input stream of the compared checkpoint");
  auto* ablate = app.add_subcommand("ablate", "vanilla / atomic / global / boundary / full over seeds")->fallthrough();
  std::string seeds;
  ablate->add_option("--seeds", seeds, "comma-separated seeds, e.g. 0,1,2");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) apply_ini(cfg, config_path);
    for (const auto& [name, value] : overrides) apply_setting(cfg, name, value);
    if (!seeds.empty()) cfg.ablation_seeds = parse_seed_list(seeds);
    cfg.validate();
    if (ablate->parsed()) worker_threads_from_env();
  } catch (const Error& e) {
    err << "usage error [" << to_string(e.category()) << "]: " << e.what() << "\n";
    return 2;
  }
  if (print_config) {
    out << to_ini(cfg);
    return 0;
  }

  try {
    if (gen->parsed()) return gen_data(cfg, out);
    if (teacher->parsed()) return train_teacher_cmd(cfg, out);
    if (student->parsed()) {
      return train_student_cmd(cfg, teacher_path.empty() ? teacher_checkpoint(cfg) : fs::path(teacher_path), out);
    }
    if (evaluate->parsed()) {
      return evaluate_cmd(cfg, checkpoint.empty() ? student_checkpoint(cfg) : fs::path(checkpoint), modality, compare,
                          compare_modality, out);
    }
    if (ablate->parsed()) return ablate_cmd(cfg, out);
    if (gradcheck->parsed()) return gradcheck_cmd(out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.category()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error [internal]: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace distill::cli
