#include "twinflow/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "twinflow/error.hpp"

namespace twinflow::svg {

namespace {

constexpr double kSize = 480.0;
constexpr double kMargin = 24.0;

constexpr std::array<std::string_view, 8> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string scatter(const Matrix& points, std::span<const int> labels, std::string_view title) {
  if (points.cols() < 2) throw InvalidArgument("svg::scatter: need at least two columns");
  if (!labels.empty() && labels.size() != static_cast<std::size_t>(points.rows())) {
    throw InvalidArgument("svg::scatter: one label per point required");
  }
  // Square, symmetric extent so the aspect ratio is preserved.
  double extent = 1.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double a = std::max(std::abs(points(i, 0)), std::abs(points(i, 1)));
    if (std::isfinite(a)) extent = std::max(extent, a);
  }
  extent *= 1.05;
  const double scale = (kSize - 2 * kMargin) / (2 * extent);
  auto px = [&](double v) { return kMargin + (v + extent) * scale; };
  auto py = [&](double v) { return kSize - kMargin - (v + extent) * scale; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kSize);
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>\n", px(-extent), py(0.0),
                     px(extent), py(0.0));
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#ccc\"/>\n", px(0.0), py(-extent),
                     px(0.0), py(extent));
  if (!title.empty()) {
    out += fmt::format("<text x=\"{}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n", kMargin,
                       escape(title));
  }
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!std::isfinite(points(i, 0)) || !std::isfinite(points(i, 1))) continue;
    const std::string_view color =
        labels.empty() ? kPalette[0] : kPalette[static_cast<std::size_t>(std::abs(labels[i])) % kPalette.size()];
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"1.5\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
                       px(points(i, 0)), py(points(i, 1)), color);
  }
  out += "</svg>\n";
  return out;
}

void write_scatter(const std::filesystem::path& path, const Matrix& points, std::span<const int> labels,
                   std::string_view title) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << scatter(points, labels, title);
}

}  // namespace twinflow::svg
