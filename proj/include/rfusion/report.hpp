#pragma once

// Output artifacts: CSV tables (the contract) and minimal SVG line/scatter
// plots (a convenience).

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rfusion {

/// Writes a header on construction, then rows of exactly that width. Fields
/// containing a comma, quote or newline are quoted.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> header);

  void row(const std::vector<std::string>& fields);
  std::size_t width() const { return header_.size(); }

 private:
  std::ostream& out_;
  std::vector<std::string> header_;
};

std::string csv_escape(std::string_view field);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
  bool scatter = false;  // markers instead of a polyline
};

struct Plot {
  std::string title, x_label, y_label;
  std::vector<PlotSeries> series;
  double width = 640, height = 420;
  bool equal_aspect = false;
};

/// Non-finite points are skipped. Axis ranges cover every finite point.
std::string render_svg(const Plot& plot);
void write_svg(const std::filesystem::path& path, const Plot& plot);

/// Writes a text file, raising DataError when the path is not writable.
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace rfusion
