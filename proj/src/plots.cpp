#include "busrl/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "busrl/errors.hpp"
#include "json.hpp"

namespace busrl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string fmt_tick(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// Minimal fixed-size SVG chart: axes, ticks, polylines, bands and points.
class SvgChart {
 public:
  SvgChart(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0,
           double y1)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)),
        x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1.0), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1.0) {}

  void line(const std::vector<double>& x, const std::vector<double>& y, const std::string& color,
            const std::string& name) {
    std::string pts;
    for (std::size_t i = 0; i < x.size(); ++i) pts += fmt(px(x[i])) + "," + fmt(py(y[i])) + " ";
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    legend(color, name);
  }

  void band(const std::vector<double>& x, const std::vector<double>& lo, const std::vector<double>& hi,
            const std::string& color) {
    std::string pts;
    for (std::size_t i = 0; i < x.size(); ++i) pts += fmt(px(x[i])) + "," + fmt(py(hi[i])) + " ";
    for (std::size_t i = x.size(); i-- > 0;) pts += fmt(px(x[i])) + "," + fmt(py(lo[i])) + " ";
    body_ << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"" << pts << "\"/>\n";
  }

  void points(const std::vector<double>& x, const std::vector<double>& y, const std::string& color,
              const std::string& name) {
    for (std::size_t i = 0; i < x.size(); ++i)
      body_ << "<circle cx=\"" << fmt(px(x[i])) << "\" cy=\"" << fmt(py(y[i])) << "\" r=\"2\" fill=\"" << color
            << "\"/>\n";
    legend(color, name);
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title_ << "</text>\n"
        << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double xv = x0_ + (x1_ - x0_) * k / 4.0;
      const double yv = y0_ + (y1_ - y0_) * k / 4.0;
      out << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << kH - kB + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
          << fmt_tick(xv) << "</text>\n";
      out << "<text x=\"" << kL - 5 << "\" y=\"" << fmt(py(yv) + 3) << "\" text-anchor=\"end\" font-size=\"10\">"
          << fmt_tick(yv) << "</text>\n";
    }
    out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 5 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel_
        << "</text>\n"
        << "<text x=\"15\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 "
        << kH / 2 << ")\">" << ylabel_ << "</text>\n"
        << body_.str() << legend_.str() << "</svg>\n";
    return out.str();
  }

 private:
  static constexpr int kW = 720, kH = 420, kL = 70, kR = 20, kT = 35, kB = 45;

  double px(double x) const { return kL + (x - x0_) / (x1_ - x0_) * (kW - kL - kR); }
  double py(double y) const { return kH - kB - (y - y0_) / (y1_ - y0_) * (kH - kT - kB); }

  void legend(const std::string& color, const std::string& name) {
    if (name.empty()) return;
    const int y = kT + 5 + 14 * legend_count_++;
    legend_ << "<rect x=\"" << kW - kR - 200 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << color
            << "\"/>\n<text x=\"" << kW - kR - 185 << "\" y=\"" << y + 9 << "\" font-size=\"10\">" << name
            << "</text>\n";
  }

  std::string title_, xlabel_, ylabel_;
  double x0_, x1_, y0_, y1_;
  std::ostringstream body_;
  std::ostringstream legend_;
  int legend_count_ = 0;
};

std::optional<int> optional_int(const json& rec, const char* key) {
  if (!rec.contains(key) || rec[key].is_null()) return std::nullopt;
  return rec[key].get<int>();
}

void write_file(const fs::path& path, const std::string& content, std::vector<std::string>& written) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  written.push_back(path.string());
}

}  // namespace

bool RunLogData::has_lesson_trace() const {
  return std::any_of(action_space.begin(), action_space.end(), [](const auto& v) { return v.has_value(); });
}

RunLogData read_run_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run log " + path);
  RunLogData data;
  data.path = path;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = rec.value("type", "");
    if (type == "header") {
      if (rec.value("schema_version", 0) != 1)
        throw ConfigError(path + ": unsupported schema_version");
      data.label = rec.value("label", "");
      data.method = rec.value("method", "");
      data.seed = rec.value("seed", std::uint64_t{0});
      header = true;
    } else if (type == "iteration") {
      for (const char* col : {"step", "mean_reward"})
        if (!rec.contains(col) || rec[col].is_null())
          throw ConfigError(path + ":" + std::to_string(lineno) + ": missing column '" + col + "'");
      data.steps.push_back(rec["step"].get<std::int64_t>());
      data.mean_reward.push_back(rec["mean_reward"].get<double>());
      data.action_space.push_back(optional_int(rec, "S"));
      data.perturbation.push_back(optional_int(rec, "alpha"));
      data.bunching.push_back(optional_int(rec, "beta"));
    }
  }
  if (!header) throw ConfigError(path + ": missing header record");
  return data;
}

std::vector<double> exponential_moving_average(const std::vector<double>& x, double coefficient) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = i == 0 ? x[0] : coefficient * y[i - 1] + (1.0 - coefficient) * x[i];
  return y;
}

CurveBand aggregate_runs(const std::vector<RunLogData>& runs, double smoothing) {
  CurveBand band;
  if (runs.empty()) return band;
  std::size_t len = runs.front().mean_reward.size();
  for (const auto& r : runs) len = std::min(len, r.mean_reward.size());
  band.runs = static_cast<int>(runs.size());
  band.steps.assign(runs.front().steps.begin(), runs.front().steps.begin() + static_cast<std::ptrdiff_t>(len));
  band.mean.assign(len, 0.0);
  band.min.assign(len, INFINITY);
  band.max.assign(len, -INFINITY);
  for (const auto& r : runs) {
    const std::vector<double> s = exponential_moving_average(r.mean_reward, smoothing);
    for (std::size_t i = 0; i < len; ++i) {
      band.mean[i] += s[i] / static_cast<double>(runs.size());
      band.min[i] = std::min(band.min[i], s[i]);
      band.max[i] = std::max(band.max[i], s[i]);
    }
  }
  return band;
}

std::vector<std::string> render_plots(const std::vector<std::string>& log_paths, const std::string& output_dir,
                                      double smoothing) {
  if (log_paths.empty()) throw ConfigError("no run logs given");
  std::vector<RunLogData> logs;
  for (const auto& p : log_paths) logs.push_back(read_run_log(p));

  // Group by label, keeping first-seen order.
  std::vector<std::string> labels;
  std::map<std::string, std::vector<RunLogData>> groups;
  for (auto& l : logs) {
    const std::string key = l.label.empty() ? l.method : l.label;
    if (!groups.count(key)) labels.push_back(key);
    groups[key].push_back(l);
  }

  fs::create_directories(output_dir);
  std::vector<std::string> written;

  std::vector<CurveBand> bands;
  double x1 = 1.0, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& label : labels) {
    bands.push_back(aggregate_runs(groups[label], smoothing));
    const CurveBand& b = bands.back();
    if (!b.steps.empty()) x1 = std::max(x1, static_cast<double>(b.steps.back()));
    for (std::size_t i = 0; i < b.mean.size(); ++i) {
      y0 = std::min(y0, b.min[i]);
      y1 = std::max(y1, b.max[i]);
    }
  }
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  const double pad = 0.05 * std::max(1e-9, y1 - y0);

  SvgChart rewards("Mean reward per decision (EMA " + fmt(smoothing) + ")", "decision steps", "reward", 0.0, x1,
                   y0 - pad, y1 + pad);
  std::ostringstream csv;
  csv << "label,runs,iterations,final_mean,final_min,final_max\n";
  for (std::size_t g = 0; g < labels.size(); ++g) {
    const CurveBand& b = bands[g];
    const std::string color = kPalette[g % std::size(kPalette)];
    std::vector<double> xs(b.steps.begin(), b.steps.end());
    if (b.runs > 1) rewards.band(xs, b.min, b.max, color);
    rewards.line(xs, b.mean, color, labels[g] + (b.runs > 1 ? " (n=" + std::to_string(b.runs) + ")" : ""));
    csv << labels[g] << ',' << b.runs << ',' << b.mean.size() << ',';
    if (b.mean.empty())
      csv << ",,\n";
    else
      csv << b.mean.back() << ',' << b.min.back() << ',' << b.max.back() << '\n';
  }
  write_file(fs::path(output_dir) / "reward_curves.svg", rewards.str(), written);
  write_file(fs::path(output_dir) / "summary.csv", csv.str(), written);

  // Lesson traces: one chart per component, every setter run overlaid.
  struct Component {
    const char* file;
    const char* title;
    std::vector<std::optional<int>> RunLogData::*column;
    double lo, hi;
  };
  const Component components[] = {
      {"lesson_S.svg", "Action space S per lesson", &RunLogData::action_space, 0, 14},
      {"lesson_alpha.svg", "Perturbation strength alpha per lesson", &RunLogData::perturbation, 0, 4},
      {"lesson_beta.svg", "Bunching strength beta per lesson", &RunLogData::bunching, 1, 10},
  };
  std::vector<const RunLogData*> traced;
  for (const auto& l : logs)
    if (l.has_lesson_trace()) traced.push_back(&l);
  if (!traced.empty()) {
    for (const Component& c : components) {
      SvgChart chart(c.title, "decision steps", "value", 0.0, x1, c.lo - 0.5, c.hi + 0.5);
      for (std::size_t k = 0; k < traced.size(); ++k) {
        const RunLogData& l = *traced[k];
        std::vector<double> xs, ys;
        const auto& col = l.*(c.column);
        for (std::size_t i = 0; i < col.size(); ++i)
          if (col[i]) {
            xs.push_back(static_cast<double>(l.steps[i]));
            ys.push_back(*col[i]);
          }
        chart.points(xs, ys, kPalette[k % std::size(kPalette)],
                     (l.label.empty() ? l.method : l.label) + " seed " + std::to_string(l.seed));
      }
      write_file(fs::path(output_dir) / c.file, chart.str(), written);
    }
  }
  return written;
}

}  // namespace busrl
