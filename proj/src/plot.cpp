#include "docdenoise/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "docdenoise/image_io.hpp"

namespace docdenoise {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr std::array<Rgb, 4> kPalette = {{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}}};

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  void put(int x, int y, Rgb color) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    p[0] = color[0];
    p[1] = color[1];
    p[2] = color[2];
  }

  // Bresenham, two pixels thick.
  void line(int x0, int y0, int x1, int y1, Rgb color) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      put(x0, y0, color);
      put(x0 + 1, y0, color);
      put(x0, y0 + 1, color);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  const std::vector<std::uint8_t>& pixels() const { return px_; }

 private:
  int w_;
  int h_;
  std::vector<std::uint8_t> px_;
};

}  // namespace

std::string chart_data_csv(const Chart& chart) {
  std::ostringstream out;
  out.precision(17);
  out << "series,x,y\n";
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) out << s.label << ',' << s.x[i] << ',' << s.y[i] << '\n';
  }
  return out.str();
}

void render_chart_png(const Chart& chart, const std::filesystem::path& path, int width,
                      int height) {
  if (chart.series.empty()) throw std::invalid_argument("chart has no series");
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "' x/y size mismatch");
  }

  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = ymin = 0;
    xmax = ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  const int left = 50;
  const int right = width - 20;
  const int top = 20;
  const int bottom = height - 40;
  auto to_px = [&](double x, double y) {
    const int px = left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left)));
    const int py = bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
    return std::pair{px, py};
  };

  Canvas canvas(width, height);
  const Rgb grid = {225, 225, 225};
  for (int i = 0; i <= 4; ++i) {
    const int y = top + (bottom - top) * i / 4;
    const int x = left + (right - left) * i / 4;
    canvas.line(left, y, right, y, grid);
    canvas.line(x, top, x, bottom, grid);
  }
  const Rgb axis = {0, 0, 0};
  canvas.line(left, bottom, right, bottom, axis);
  canvas.line(left, top, left, bottom, axis);

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& s = chart.series[k];
    const Rgb color = kPalette[k % kPalette.size()];
    bool have_prev = false;
    std::pair<int, int> prev;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have_prev = false;
        continue;
      }
      const auto cur = to_px(s.x[i], s.y[i]);
      if (have_prev) {
        canvas.line(prev.first, prev.second, cur.first, cur.second, color);
      } else {
        canvas.line(cur.first - 2, cur.second, cur.first + 2, cur.second, color);
      }
      prev = cur;
      have_prev = true;
    }
  }

  const std::vector<std::pair<std::string, std::string>> text = {
      {"Title", chart.title}, {"XLabel", chart.x_label}, {"YLabel", chart.y_label},
      {"Data", chart_data_csv(chart)}};
  write_rgb_png(path, height, width, canvas.pixels(), text);
}

}  // namespace docdenoise
