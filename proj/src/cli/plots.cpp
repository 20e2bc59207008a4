#include "distill/cli/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "distill/core/binary_io.hpp"

namespace distill::cli {

namespace {

constexpr double kWidth = 640, kHeight = 360, kMargin = 48;

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

std::string svg_open() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" font-family=\"sans-serif\" "
         "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

struct Series {
  const char* name;
  const char* colour;
  double train::EpochRecord::*field;
};

}  // namespace

void emit_loss_curve(const train::TrainLog& log, const std::filesystem::path& dir, const std::string& stem) {
  if (log.rows.empty()) throw DegenerateInputError("emit_loss_curve: training log is empty");
  core::write_file(dir / (stem + "_loss.csv"), log.to_csv());

  const std::vector<Series> series{{"l_total", "#1f77b4", &train::EpochRecord::total},
                                   {"l_cls", "#ff7f0e", &train::EpochRecord::cls},
                                   {"val_loss", "#2ca02c", &train::EpochRecord::val_loss}};
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : log.rows) {
    for (const Series& s : series) {
      lo = std::min(lo, r.*s.field);
      hi = std::max(hi, r.*s.field);
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const int first = log.rows.front().epoch, last = log.rows.back().epoch;
  auto x = [&](int epoch) {
    return last == first ? kWidth / 2 : kMargin + (kWidth - 2 * kMargin) * (epoch - first) / double(last - first);
  };
  auto y = [&](double v) { return kHeight - kMargin - (kHeight - 2 * kMargin) * (v - lo) / (hi - lo); };

  std::string svg = svg_open();
  svg += "<line x1=\"48\" y1=\"312\" x2=\"592\" y2=\"312\" stroke=\"black\"/>\n";
  svg += "<line x1=\"48\" y1=\"48\" x2=\"48\" y2=\"312\" stroke=\"black\"/>\n";
  svg += "<text x=\"320\" y=\"340\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"44\" y=\"52\" text-anchor=\"end\">" + fmt("%.4g", hi) + "</text>\n";
  svg += "<text x=\"44\" y=\"312\" text-anchor=\"end\">" + fmt("%.4g", lo) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    std::string points;
    for (const auto& r : log.rows) points += fmt("%.2f,", x(r.epoch)) + fmt("%.2f ", y(r.*s.field));
    if (log.rows.size() == 1) {
      svg += "<circle cx=\"" + fmt("%.2f", x(first)) + "\" cy=\"" + fmt("%.2f", y(log.rows[0].*s.field)) +
             "\" r=\"3\" fill=\"" + s.colour + "\"/>\n";
    } else {
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(s.colour) + "\" stroke-width=\"1.5\" points=\"" +
             points + "\"/>\n";
    }
    svg += "<text x=\"" + fmt("%.0f", 480.0) + "\" y=\"" + fmt("%.0f", 24.0 + 14.0 * i) + "\" fill=\"" + s.colour +
           "\">" + s.name + "</text>\n";
  }
  svg += "</svg>\n";
  core::write_file(dir / (stem + "_loss.svg"), svg);
}

void emit_ap_difference(const eval::EvalReport& report, const eval::EvalReport& baseline,
                        const std::filesystem::path& dir) {
  const std::size_t classes = std::min(report.frame.per_class.size(), baseline.frame.per_class.size());
  std::vector<std::pair<std::size_t, double>> diffs;
  std::string csv = "class,ap,baseline_ap,difference\n";
  for (std::size_t k = 0; k < classes; ++k) {
    const auto& a = report.frame.per_class[k];
    const auto& b = baseline.frame.per_class[k];
    if (!a || !b) continue;
    diffs.emplace_back(k, *a - *b);
    char line[128];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", k, *a, *b, *a - *b);
    csv += line;
  }
  core::write_file(dir / "ap_diff.csv", csv);

  double span = 1e-6;
  for (const auto& d : diffs) span = std::max(span, std::abs(d.second));
  const double mid = kHeight / 2, half = kHeight / 2 - kMargin;
  const double slot = diffs.empty() ? 0.0 : (kWidth - 2 * kMargin) / double(diffs.size());
  std::string svg = svg_open();
  svg += "<line x1=\"48\" y1=\"180\" x2=\"592\" y2=\"180\" stroke=\"black\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\">frame AP difference per class</text>\n";
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    const double h = half * diffs[i].second / span;
    const double x0 = kMargin + slot * i + slot * 0.15;
    svg += "<rect x=\"" + fmt("%.2f", x0) + "\" y=\"" + fmt("%.2f", h >= 0 ? mid - h : mid) + "\" width=\"" +
           fmt("%.2f", slot * 0.7) + "\" height=\"" + fmt("%.2f", std::abs(h)) + "\" fill=\"" +
           (h >= 0 ? "#2ca02c" : "#d62728") + "\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", x0 + slot * 0.35) + "\" y=\"" + fmt("%.0f", kHeight - 20) +
           "\" text-anchor=\"middle\">" + std::to_string(diffs[i].first) + "</text>\n";
  }
  svg += "</svg>\n";
  core::write_file(dir / "ap_diff.svg", svg);
}

void emit_plots(const train::TrainLog& log, const eval::EvalReport* report, const eval::EvalReport* baseline,
                const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  emit_loss_curve(log, dir, stem);
  if (report && baseline) emit_ap_difference(*report, *baseline, dir);
}

}  // namespace distill::cli
