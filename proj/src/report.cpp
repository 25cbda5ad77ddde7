#include "rfusion/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "rfusion/error.hpp"

namespace rfusion {

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> header)
    : out_(out), header_(std::move(header)) {
  row(header_);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != header_.size()) {
    throw ContractError("csv row has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header_.size()));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << '\n';
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// SVG

namespace {

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fixed(double x, int digits = 2) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
  return std::string(buf, r.ptr);
}

// Shortest general form, for tick labels.
std::string tick(double x) {
  if (std::fabs(x) < 1e-12) x = 0.0;
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 4);
  return std::string(buf, r.ptr);
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = INFINITY, hi = -INFINITY;
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

}  // namespace

std::string render_svg(const Plot& plot) {
  const double left = 64, right = 150, top = 36, bottom = 48;
  const double pw = plot.width - left - right, ph = plot.height - top - bottom;
  Range xr, yr;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        xr.add(s.x[i]);
        yr.add(s.y[i]);
      }
    }
  xr.settle();
  yr.settle();
  if (plot.equal_aspect) {
    const double span = std::max(xr.hi - xr.lo, yr.hi - yr.lo);
    const double xc = 0.5 * (xr.lo + xr.hi), yc = 0.5 * (yr.lo + yr.hi);
    xr.lo = xc - span / 2, xr.hi = xc + span / 2;
    yr.lo = yc - span / 2, yr.hi = yc + span / 2;
  }
  auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return top + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(plot.width, 0) + "\" height=\"" +
       fixed(plot.height, 0) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
       xml_escape(plot.title) + "</text>\n";
  o += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) + "\" height=\"" +
       fixed(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xr.lo + (xr.hi - xr.lo) * k / 4.0, yv = yr.lo + (yr.hi - yr.lo) * k / 4.0;
    o += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(top + ph + 16) + "\" text-anchor=\"middle\">" +
         tick(xv) + "</text>\n";
    o += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(py(yv) + 4) + "\" text-anchor=\"end\">" + tick(yv) +
         "</text>\n";
  }
  o += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(plot.height - 10) + "\" text-anchor=\"middle\">" +
       xml_escape(plot.x_label) + "</text>\n";
  o += "<text transform=\"translate(16," + fixed(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       xml_escape(plot.y_label) + "</text>\n";

  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.scatter) {
      o += "<g fill=\"" + std::string(color) + "\" fill-opacity=\"0.6\">\n";
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        o += "<circle cx=\"" + fixed(px(s.x[i])) + "\" cy=\"" + fixed(py(s.y[i])) + "\" r=\"1.6\"/>\n";
      }
      o += "</g>\n";
    } else {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        if (!pts.empty()) pts += ' ';
        pts += fixed(px(s.x[i])) + "," + fixed(py(s.y[i]));
      }
      o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
    }
    const double ly = top + 12 + 16 * static_cast<double>(si);
    o += "<rect x=\"" + fixed(left + pw + 10) + "\" y=\"" + fixed(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
         color + "\"/>\n";
    o += "<text x=\"" + fixed(left + pw + 24) + "\" y=\"" + fixed(ly) + "\">" + xml_escape(s.name) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

void write_svg(const std::filesystem::path& path, const Plot& plot) { write_text(path, render_svg(plot)); }

}  // namespace rfusion
