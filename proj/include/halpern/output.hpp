#pragma once

// File emission: atomic writes, schedule CSV and a minimal SVG line plot.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "halpern/schedules.hpp"

namespace halpern {

/// Writes through a temporary file in the same directory and renames it
/// into place. Throws std::runtime_error naming the path on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// `n,beta,bound` with 17 significant digits.
void write_schedule_csv(std::ostream& os, std::span<const ScheduleRow> rows);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

/// True when some positive value is below 1e-3 of the largest one.
bool wants_log_scale(const PlotSpec& spec);

/// Self-contained SVG with one polyline per series. Non-positive values are
/// dropped on a log axis.
std::string render_svg(const PlotSpec& spec);

} // namespace halpern
