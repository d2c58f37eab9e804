#include "halpern/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <system_error>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <unistd.h>

namespace halpern {

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
  const fs::path tmp = dir / fmt::format(".{}.tmp.{}", path.filename().string(), ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw std::runtime_error(fmt::format("write to {} failed", tmp.string()));
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw std::runtime_error(fmt::format("cannot move output into {}: {}", path.string(), ec.message()));
  }
}

void write_schedule_csv(std::ostream& os, std::span<const ScheduleRow> rows) {
  os << "n,beta,bound\n";
  for (const auto& r : rows) fmt::print(os, "{},{:.17g},{:.17g}\n", r.n, r.beta, r.bound);
}

bool wants_log_scale(const PlotSpec& spec) {
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& s : spec.series) {
    for (double v : s.y) {
      if (!(v > 0.0) || !std::isfinite(v)) continue;
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
  }
  return hi > 0.0 && lo < 1e-3 * hi;
}

std::string render_svg(const PlotSpec& spec) {
  constexpr double kW = 720.0;
  constexpr double kH = 450.0;
  constexpr double kLeft = 80.0;
  constexpr double kRight = 160.0;
  constexpr double kTop = 40.0;
  constexpr double kBottom = 50.0;
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                        "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};
  const bool log_y = wants_log_scale(spec);
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  auto usable = [&](double v) { return std::isfinite(v) && (!log_y || v > 0.0); };

  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : spec.series) {
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!usable(s.y[k]) || !std::isfinite(s.x[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, ty(s.y[k]));
      y1 = std::max(y1, ty(s.y[k]));
    }
  }
  if (!(x0 <= x1)) x0 = 0.0, x1 = 1.0;
  if (!(y0 <= y1)) y0 = 0.0, y1 = 1.0;
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{3}</text>\n"
      "<rect x=\"{4}\" y=\"{5}\" width=\"{6}\" height=\"{7}\" fill=\"none\" stroke=\"black\"/>\n",
      kW, kH, kLeft, spec.title, kLeft, kTop, pw, ph);
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0;
    const double fy = y0 + (y1 - y0) * t / 4.0;
    const double label_y = log_y ? std::pow(10.0, fy) : fy;
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                       "text-anchor=\"middle\">{:.4g}</text>\n",
                       kLeft + pw * t / 4.0, kTop + ph + 16.0, fx);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                       "text-anchor=\"end\">{:.3g}</text>\n",
                       kLeft - 6.0, kTop + ph * (1.0 - t / 4.0) + 4.0, label_y);
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "text-anchor=\"middle\">{}</text>\n",
                     kLeft + pw / 2.0, kH - 10.0, spec.x_label);
  out += fmt::format("<text x=\"16\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "transform=\"rotate(-90 16 {:.2f})\" text-anchor=\"middle\">{}{}</text>\n",
                     kTop + ph / 2.0, kTop + ph / 2.0, spec.y_label, log_y ? " (log)" : "");
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const char* color = kColors[si % std::size(kColors)];
    std::string points;
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!usable(s.y[k]) || !std::isfinite(s.x[k])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[k]), py(s.y[k]));
    }
    if (!points.empty()) points.pop_back();
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, points);
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(si);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" "
                       "stroke-width=\"2\"/>\n",
                       kW - kRight + 12.0, ly, kW - kRight + 36.0, color);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                       kW - kRight + 42.0, ly + 4.0, s.label);
  }
  out += "</svg>\n";
  return out;
}

} // namespace halpern
