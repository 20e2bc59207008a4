#pragma once

#include <filesystem>
#include <string>

#include "distill/eval/metrics.hpp"
#include "distill/train/trainer.hpp"

namespace distill::cli {

/// Loss curves as SVG plus the backing CSV: <stem>_loss.svg, <stem>_loss.csv.
void emit_loss_curve(const train::TrainLog& log, const std::filesystem::path& dir, const std::string& stem);

/// Per-class frame-AP difference (report minus baseline) as SVG bars and
/// CSV: ap_diff.svg, ap_diff.csv.
void emit_ap_difference(const eval::EvalReport& report, const eval::EvalReport& baseline,
                        const std::filesystem::path& dir);

/// Loss curve always; AP differences when both reports are given.
void emit_plots(const train::TrainLog& log, const eval::EvalReport* report, const eval::EvalReport* baseline,
                const std::filesystem::path& dir, const std::string& stem = "train");

}  // namespace distill::cli
