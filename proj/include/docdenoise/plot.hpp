#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace docdenoise {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Long-format CSV (series,x,y) of every plotted point.
std::string chart_data_csv(const Chart& chart);

/// Rasterizes the chart as a line plot. The PNG carries the title and
/// the CSV data export as tEXt chunks ("Title", "Data"). Non-finite
/// points are skipped when drawing but kept in the export.
void render_chart_png(const Chart& chart, const std::filesystem::path& path, int width = 640,
                      int height = 400);

}  // namespace docdenoise
